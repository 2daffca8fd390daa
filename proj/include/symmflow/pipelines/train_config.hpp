#pragma once

#include <cstdint>

#include "symmflow/core/errors.hpp"
#include "symmflow/nn/unet.hpp"
#include "symmflow/palette.hpp"
#include "symmflow/vae.hpp"

namespace symmflow {

// Everything a training run needs beyond the dataset itself. Serialized into
// checkpoints so inference can reconstruct the exact setup.
struct TrainConfig {
    int epochs = 30;
    int batch_size = 64;
    double learning_rate = 1e-3;
    int warmup_epochs = 2;
    double beta = 1.0;
    double lambda_y = 1.0;
    int solver_steps = 25;
    bool freeze_image = false;
    int runs = 5;
    double score_temperature = 1.0;
    std::uint64_t seed = 7;
    PaletteMode palette_mode = PaletteMode::rgb;
    VelocityNetConfig net;
    bool latent = false;
    VaeConfig vae;

    void validate() const {
        if (learning_rate <= 0) throw InvalidArgument("TrainConfig: learning_rate must be > 0");
        if (epochs < 1) throw InvalidArgument("TrainConfig: epochs must be >= 1");
        if (warmup_epochs < 1 || warmup_epochs >= epochs)
            throw InvalidArgument("TrainConfig: need 0 < warmup_epochs < epochs");
        if (beta < 0) throw InvalidArgument("TrainConfig: beta must be >= 0");
        if (batch_size < 1) throw InvalidArgument("TrainConfig: batch_size must be >= 1");
        if (solver_steps < 1) throw InvalidArgument("TrainConfig: solver_steps must be >= 1");
        if (runs < 1) throw InvalidArgument("TrainConfig: runs must be >= 1");
        if (score_temperature <= 0)
            throw InvalidArgument("TrainConfig: score_temperature must be > 0");
        if (lambda_y <= 0) throw InvalidArgument("TrainConfig: lambda_y must be > 0");
        net.validate();
    }
};

}  // namespace symmflow
