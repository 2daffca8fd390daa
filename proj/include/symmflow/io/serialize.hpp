#pragma once

#include <json.hpp>

#include "symmflow/core/rng.hpp"
#include "symmflow/palette.hpp"
#include "symmflow/pipelines/train_config.hpp"

namespace symmflow {

using Json = nlohmann::ordered_json;

inline Json to_json(const VelocityNetConfig& c) {
    Json j;
    j["base_channels"] = c.base_channels;
    j["depth_per_resolution"] = c.depth_per_resolution;
    j["channel_multiples"] = c.channel_multiples;
    j["attention_heads"] = c.attention_heads;
    j["head_channels"] = c.head_channels;
    j["attention_resolution"] = c.attention_resolution;
    j["dropout"] = c.dropout;
    j["image_channels"] = c.image_channels;
    j["label_channels"] = c.label_channels;
    return j;
}

inline VelocityNetConfig net_config_from_json(const Json& j) {
    VelocityNetConfig c;
    c.base_channels = j.at("base_channels").get<Index>();
    c.depth_per_resolution = j.at("depth_per_resolution").get<Index>();
    c.channel_multiples = j.at("channel_multiples").get<std::vector<Index>>();
    c.attention_heads = j.at("attention_heads").get<Index>();
    c.head_channels = j.at("head_channels").get<Index>();
    c.attention_resolution = j.at("attention_resolution").get<Index>();
    c.dropout = j.at("dropout").get<double>();
    c.image_channels = j.at("image_channels").get<Index>();
    c.label_channels = j.at("label_channels").get<Index>();
    return c;
}

inline Json to_json(const ClassPalette& p) {
    Json j;
    j["mode"] = to_string(p.mode);
    j["num_classes"] = p.num_classes;
    Json codes = Json::array();
    for (const auto& c : p.codes) codes.push_back({c[0], c[1], c[2]});
    j["codes"] = codes;
    return j;
}

inline ClassPalette palette_from_json(const Json& j) {
    ClassPalette p;
    p.mode = palette_mode_from_string(j.at("mode").get<std::string>());
    p.num_classes = j.at("num_classes").get<int>();
    for (const auto& c : j.at("codes"))
        p.codes.emplace_back(c.at(0).get<double>(), c.at(1).get<double>(), c.at(2).get<double>());
    if (static_cast<int>(p.codes.size()) != p.num_classes)
        throw FormatError("palette: code count mismatch");
    p.min_pairwise_distance = detail::min_pairwise(p.codes);
    return p;
}

inline Json to_json(const VaeConfig& c) {
    Json j;
    j["in_channels"] = c.in_channels;
    j["base_channels"] = c.base_channels;
    j["latent_channels"] = c.latent_channels;
    j["downsample"] = c.downsample;
    j["kl_weight"] = c.kl_weight;
    return j;
}

inline VaeConfig vae_config_from_json(const Json& j) {
    VaeConfig c;
    c.in_channels = j.at("in_channels").get<Index>();
    c.base_channels = j.at("base_channels").get<Index>();
    c.latent_channels = j.at("latent_channels").get<Index>();
    c.downsample = j.at("downsample").get<Index>();
    c.kl_weight = j.at("kl_weight").get<double>();
    return c;
}

inline Json to_json(const TrainConfig& c) {
    Json j;
    j["epochs"] = c.epochs;
    j["batch_size"] = c.batch_size;
    j["learning_rate"] = c.learning_rate;
    j["warmup_epochs"] = c.warmup_epochs;
    j["beta"] = c.beta;
    j["lambda_y"] = c.lambda_y;
    j["solver_steps"] = c.solver_steps;
    j["freeze_image"] = c.freeze_image;
    j["runs"] = c.runs;
    j["score_temperature"] = c.score_temperature;
    j["seed"] = c.seed;
    j["palette_mode"] = to_string(c.palette_mode);
    j["net"] = to_json(c.net);
    j["latent"] = c.latent;
    j["vae"] = to_json(c.vae);
    return j;
}

inline TrainConfig train_config_from_json(const Json& j) {
    TrainConfig c;
    c.epochs = j.at("epochs").get<int>();
    c.batch_size = j.at("batch_size").get<int>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.warmup_epochs = j.at("warmup_epochs").get<int>();
    c.beta = j.at("beta").get<double>();
    c.lambda_y = j.at("lambda_y").get<double>();
    c.solver_steps = j.at("solver_steps").get<int>();
    c.freeze_image = j.at("freeze_image").get<bool>();
    c.runs = j.at("runs").get<int>();
    c.score_temperature = j.at("score_temperature").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.palette_mode = palette_mode_from_string(j.at("palette_mode").get<std::string>());
    c.net = net_config_from_json(j.at("net"));
    c.latent = j.at("latent").get<bool>();
    c.vae = vae_config_from_json(j.at("vae"));
    return c;
}

}  // namespace symmflow
