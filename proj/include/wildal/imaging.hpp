#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "wildal/ingest.hpp"

namespace wildal {

/// Interleaved 8-bit RGB raster.
class Image {
public:
    Image() = default;
    Image(int width, int height, std::uint8_t fill = 0);
    Image(int width, int height, std::vector<std::uint8_t> rgb);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    bool empty() const noexcept { return data_.empty(); }

    std::uint8_t& at(int x, int y, int c) { return data_[(static_cast<std::size_t>(y) * width_ + x) * 3 + c]; }
    std::uint8_t at(int x, int y, int c) const { return data_[(static_cast<std::size_t>(y) * width_ + x) * 3 + c]; }
    // Edge-replicating access.
    std::uint8_t clamped(int x, int y, int c) const;

    const std::vector<std::uint8_t>& data() const noexcept { return data_; }
    std::vector<std::uint8_t>& data() noexcept { return data_; }

    friend bool operator==(const Image&, const Image&) = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> data_;
};

// Decodes any raster format OpenCV can read into RGB. Throws MissingFile / IoFailure.
Image read_image(const std::filesystem::path& path);
// PNG-encodes an image (used by the service for synthetic images).
std::vector<std::uint8_t> encode_png(const Image& img);

enum class ResizeFilter { nearest, bilinear };

struct CropConfig {
    int side = 224;
    ResizeFilter filter = ResizeFilter::bilinear;
};

struct CropRecord {
    std::string crop_id;
    std::string image_id;
    std::size_t box_index = 0;
    int aug_index = 0;
    double detector_confidence = 0;
    std::optional<std::string> aug_descriptor;
    std::optional<Image> pixels;
};

std::string make_crop_id(std::string_view image_id, std::size_t box_index, int aug_index);

/// Pixel-space square window cut around a normalized box.
struct CropWindow {
    int x0 = 0, y0 = 0, side = 0;
};

// Maps the box to pixels (round half up), grows the shorter axis
// symmetrically to a square and shifts it back inside the image where it
// fits. Throws DegenerateBox if the box covers zero pixels on either axis.
CropWindow square_window(int image_width, int image_height, const BBox& box);

Image resample(const Image& src, const CropWindow& window, int side, ResizeFilter filter);

CropRecord crop_and_resize(const Image& image, const Detection& det, const CropConfig& cfg,
                           std::string_view image_id = {}, std::size_t box_index = 0);

// Individual label-preserving transforms.
Image flip_horizontal(const Image& img);
// Rotation about the image center; exposed corners use edge replication.
Image rotate(const Image& img, double degrees);
// Scales each channel around its mean, clamped to [0,255].
Image adjust_contrast(const Image& img, double factor);

struct AugmentationPolicy {
    int max_augmentations_per_crop = 3;
    double max_rotation_degrees = 25.0;
    double contrast_min = 0.7;
    double contrast_max = 1.3;
    std::uint64_t seed = 0;
};

// Returns k variants, each applying 1-3 distinct ops sampled from
// {rotate, hflip, contrast}. Variant j gets aug_index j+1. Deterministic in
// (crop.crop_id, policy.seed).
std::vector<CropRecord> augment(const CropRecord& crop, const AugmentationPolicy& policy, int k);

// Re-applies the ops listed in an aug_descriptor, e.g. "rotate=12.5;hflip;contrast=0.9".
Image apply_descriptor(const Image& img, std::string_view descriptor);

}  // namespace wildal
