// IDX (MNIST-style) ingestion and emission. Big-endian magics 0x00000803
// (images, dims [n, rows, cols]) and 0x00000801 (labels, dims [n]); pixel
// bytes scale to [0, 1].
#pragma once

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ztrust/data.hpp"
#include "ztrust/errors.hpp"

namespace ztrust {

namespace detail {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

inline std::uint32_t read_be32(std::istream& in, const std::string& path) {
    unsigned char raw[4];
    if (!in.read(reinterpret_cast<char*>(raw), 4)) {
        throw FormatError("idx: truncated file: " + path);
    }
    return (static_cast<std::uint32_t>(raw[0]) << 24) | (static_cast<std::uint32_t>(raw[1]) << 16) |
           (static_cast<std::uint32_t>(raw[2]) << 8) | static_cast<std::uint32_t>(raw[3]);
}

inline void write_be32(std::ostream& out, std::uint32_t v) {
    const unsigned char raw[4] = {static_cast<unsigned char>(v >> 24),
                                  static_cast<unsigned char>(v >> 16),
                                  static_cast<unsigned char>(v >> 8),
                                  static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(raw), 4);
}

}  // namespace detail

inline Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream images(images_path, std::ios::binary);
    if (!images) throw FormatError("idx: cannot open " + images_path);
    std::ifstream labels(labels_path, std::ios::binary);
    if (!labels) throw FormatError("idx: cannot open " + labels_path);

    const std::uint32_t image_magic = detail::read_be32(images, images_path);
    if (image_magic != detail::kIdxImagesMagic) {
        throw FormatError("idx: bad image magic in " + images_path);
    }
    const std::uint32_t n_images = detail::read_be32(images, images_path);
    const std::uint32_t rows = detail::read_be32(images, images_path);
    const std::uint32_t cols = detail::read_be32(images, images_path);

    const std::uint32_t label_magic = detail::read_be32(labels, labels_path);
    if (label_magic != detail::kIdxLabelsMagic) {
        throw FormatError("idx: bad label magic in " + labels_path);
    }
    const std::uint32_t n_labels = detail::read_be32(labels, labels_path);
    if (n_images != n_labels) {
        throw FormatError("idx: image/label count mismatch (" + std::to_string(n_images) + " vs " +
                          std::to_string(n_labels) + ")");
    }

    const std::size_t pixels = static_cast<std::size_t>(rows) * cols;
    if (pixels == 0) throw FormatError("idx: zero-sized images in " + images_path);

    Dataset ds;
    ds.n_features = static_cast<int>(pixels);
    std::vector<unsigned char> pixel_buf(pixels);
    int max_label = 0;
    for (std::uint32_t i = 0; i < n_images; ++i) {
        if (!images.read(reinterpret_cast<char*>(pixel_buf.data()),
                         static_cast<std::streamsize>(pixels))) {
            throw FormatError("idx: truncated image data in " + images_path);
        }
        char label_byte = 0;
        if (!labels.read(&label_byte, 1)) {
            throw FormatError("idx: truncated label data in " + labels_path);
        }
        Sample s;
        s.label = static_cast<unsigned char>(label_byte);
        max_label = std::max(max_label, s.label);
        s.features.resize(pixels);
        for (std::size_t p = 0; p < pixels; ++p) {
            s.features[p] = static_cast<double>(pixel_buf[p]) / 255.0;
        }
        ds.samples.push_back(std::move(s));
    }
    ds.n_classes = max_label + 1;
    return ds;
}

// Quantizes features to bytes with one affine min-max map over the whole
// dataset, rows=1, cols=n_features. Lossy for real-valued features.
inline void save_idx(const Dataset& ds, const std::string& images_path,
                     const std::string& labels_path) {
    if (ds.samples.empty()) throw std::invalid_argument("save_idx: empty dataset");

    double lo = ds.samples.front().features.front();
    double hi = lo;
    for (const Sample& s : ds.samples) {
        for (double v : s.features) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    const double range = hi > lo ? hi - lo : 1.0;

    std::ofstream images(images_path, std::ios::binary);
    if (!images) throw FormatError("idx: cannot write " + images_path);
    std::ofstream labels(labels_path, std::ios::binary);
    if (!labels) throw FormatError("idx: cannot write " + labels_path);

    detail::write_be32(images, detail::kIdxImagesMagic);
    detail::write_be32(images, static_cast<std::uint32_t>(ds.samples.size()));
    detail::write_be32(images, 1);
    detail::write_be32(images, static_cast<std::uint32_t>(ds.n_features));
    detail::write_be32(labels, detail::kIdxLabelsMagic);
    detail::write_be32(labels, static_cast<std::uint32_t>(ds.samples.size()));

    for (const Sample& s : ds.samples) {
        for (double v : s.features) {
            const double scaled = 255.0 * (v - lo) / range;
            const auto byte = static_cast<unsigned char>(
                std::clamp(std::lround(scaled), 0L, 255L));
            images.put(static_cast<char>(byte));
        }
        labels.put(static_cast<char>(static_cast<unsigned char>(s.label)));
    }
    if (!images || !labels) throw FormatError("idx: write failed");
}

}  // namespace ztrust
