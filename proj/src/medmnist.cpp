#include "symmflow/data/medmnist.hpp"

#include <cstring>

#include "symmflow/io/npy.hpp"
#include "symmflow/io/zip.hpp"

namespace symmflow {

namespace {

NpyArray load_entry(const std::string& path, const std::string& base) {
    if (zip_has_entry(path, base + ".npy"))
        return parse_npy(zip_read_entry(path, base + ".npy"), base);
    if (zip_has_entry(path, base))
        return parse_npy(zip_read_entry(path, base), base);
    throw FormatError(path + ": missing entry " + base);
}

long read_int(const NpyArray& arr, long i) {
    const std::uint8_t* p = arr.data.data() + i * arr.element_size();
    const char kind = arr.dtype[1];
    const int sz = arr.element_size();
    if (kind == 'u' && sz == 1) return p[0];
    if (kind == 'i' && sz == 1) return static_cast<std::int8_t>(p[0]);
    if (kind == 'u' && sz == 2) return p[0] | (p[1] << 8);
    if (kind == 'i' && sz == 2) return static_cast<std::int16_t>(p[0] | (p[1] << 8));
    if ((kind == 'i' || kind == 'u') && sz == 4) {
        std::int32_t v;
        std::memcpy(&v, p, 4);
        return v;
    }
    if ((kind == 'i' || kind == 'u') && sz == 8) {
        std::int64_t v;
        std::memcpy(&v, p, 8);
        return static_cast<long>(v);
    }
    throw FormatError("labels: unsupported dtype " + arr.dtype);
}

LabeledImageDataset<float> build_split(const std::string& path, Split split,
                                       const std::string& prefix) {
    const NpyArray imgs = load_entry(path, prefix + "_images");
    const NpyArray labs = load_entry(path, prefix + "_labels");

    if (imgs.dtype != "|u1" && imgs.dtype != "<u1")
        throw FormatError(prefix + "_images: expected uint8 pixels, got " + imgs.dtype);
    if (imgs.shape.size() != 3 && imgs.shape.size() != 4)
        throw FormatError(prefix + "_images: expected (N,H,W) or (N,H,W,C)");

    const long n = imgs.shape[0];
    const long h = imgs.shape[1];
    const long w = imgs.shape[2];
    const long c = imgs.shape.size() == 4 ? imgs.shape[3] : 1;
    if (c != 1 && c != 3)
        throw FormatError(prefix + "_images: unsupported channel count");

    if (labs.shape.empty() || labs.shape[0] != n)
        throw DataError(prefix + "_labels: label count mismatch");
    if (labs.shape.size() > 2 || (labs.shape.size() == 2 && labs.shape[1] != 1))
        throw FormatError(prefix + "_labels: expected (N,) or (N,1)");

    LabeledImageDataset<float> ds;
    ds.split = split;
    ds.name = prefix;
    ds.images = Tensor<float>(n, c, h, w);
    ds.labels.resize(static_cast<std::size_t>(n));

    // bytes arrive HWC; store CHW
    const std::uint8_t* px = imgs.data.data();
    for (long i = 0; i < n; ++i) {
        float* dst = ds.images.sample_data(i);
        const std::uint8_t* src = px + i * h * w * c;
        for (long y = 0; y < h; ++y)
            for (long x = 0; x < w; ++x)
                for (long ch = 0; ch < c; ++ch)
                    dst[ch * h * w + y * w + x] =
                        static_cast<float>(byte_to_unit(src[(y * w + x) * c + ch]));
    }

    long max_label = 0;
    for (long i = 0; i < n; ++i) {
        const long v = read_int(labs, i);
        if (v < 0) throw DataError(prefix + "_labels: negative label at index " + std::to_string(i));
        ds.labels[static_cast<std::size_t>(i)] = static_cast<int>(v);
        max_label = std::max(max_label, v);
    }
    ds.num_classes = static_cast<int>(max_label) + 1;
    return ds;
}

}  // namespace

std::array<LabeledImageDataset<float>, 3> load_medmnist(const std::string& path) {
    std::array<LabeledImageDataset<float>, 3> out = {
        build_split(path, Split::train, "train"),
        build_split(path, Split::val, "val"),
        build_split(path, Split::test, "test"),
    };
    int k = 0;
    for (const auto& ds : out) k = std::max(k, ds.num_classes);
    for (auto& ds : out) {
        ds.num_classes = k;
        ds.validate();
    }
    return out;
}

}  // namespace symmflow
