#include "wildal/imaging.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <numbers>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "wildal/csv.hpp"
#include "wildal/error.hpp"
#include "wildal/random.hpp"

namespace wildal {

Image::Image(int width, int height, std::uint8_t fill)
    : width_(width), height_(height), data_(static_cast<std::size_t>(width) * height * 3, fill) {
    if (width < 1 || height < 1) throw Error(Errc::InvalidArgument, "image dimensions must be positive");
}

Image::Image(int width, int height, std::vector<std::uint8_t> rgb)
    : width_(width), height_(height), data_(std::move(rgb)) {
    if (width < 1 || height < 1) throw Error(Errc::InvalidArgument, "image dimensions must be positive");
    if (data_.size() != static_cast<std::size_t>(width) * height * 3) {
        throw Error(Errc::DimensionMismatch, "pixel buffer does not match width*height*3");
    }
}

std::uint8_t Image::clamped(int x, int y, int c) const {
    return at(std::clamp(x, 0, width_ - 1), std::clamp(y, 0, height_ - 1), c);
}

Image read_image(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw Error(Errc::MissingFile, path.string());
    cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
    if (bgr.empty()) throw Error(Errc::IoFailure, "cannot decode image " + path.string());
    Image out(bgr.cols, bgr.rows);
    for (int y = 0; y < bgr.rows; ++y) {
        const auto* row = bgr.ptr<cv::Vec3b>(y);
        for (int x = 0; x < bgr.cols; ++x) {
            out.at(x, y, 0) = row[x][2];
            out.at(x, y, 1) = row[x][1];
            out.at(x, y, 2) = row[x][0];
        }
    }
    return out;
}

std::vector<std::uint8_t> encode_png(const Image& img) {
    cv::Mat bgr(img.height(), img.width(), CV_8UC3);
    for (int y = 0; y < img.height(); ++y) {
        auto* row = bgr.ptr<cv::Vec3b>(y);
        for (int x = 0; x < img.width(); ++x) {
            row[x] = cv::Vec3b(img.at(x, y, 2), img.at(x, y, 1), img.at(x, y, 0));
        }
    }
    std::vector<std::uint8_t> buf;
    if (!cv::imencode(".png", bgr, buf)) throw Error(Errc::IoFailure, "PNG encoding failed");
    return buf;
}

std::string make_crop_id(std::string_view image_id, std::size_t box_index, int aug_index) {
    std::string id(image_id);
    id += '#';
    id += std::to_string(box_index);
    id += '#';
    id += std::to_string(aug_index);
    return id;
}

namespace {

int round_half_up(double v) { return static_cast<int>(std::floor(v + 0.5)); }

// Places a window of `side` pixels along one axis of length `extent`.
int place(int start, int side, int extent) {
    if (side <= extent) return std::clamp(start, 0, extent - side);
    return -((side - extent) / 2);
}

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0)); }

double bilinear_at(const Image& img, double sx, double sy, int c) {
    const double fx0 = std::floor(sx);
    const double fy0 = std::floor(sy);
    const int x0 = static_cast<int>(fx0);
    const int y0 = static_cast<int>(fy0);
    const double fx = sx - fx0;
    const double fy = sy - fy0;
    const double top = img.clamped(x0, y0, c) * (1 - fx) + img.clamped(x0 + 1, y0, c) * fx;
    const double bottom = img.clamped(x0, y0 + 1, c) * (1 - fx) + img.clamped(x0 + 1, y0 + 1, c) * fx;
    return top * (1 - fy) + bottom * fy;
}

}  // namespace

CropWindow square_window(int image_width, int image_height, const BBox& box) {
    const int x0 = round_half_up(box.x * image_width);
    const int x1 = round_half_up((box.x + box.w) * image_width);
    const int y0 = round_half_up(box.y * image_height);
    const int y1 = round_half_up((box.y + box.h) * image_height);
    const int pw = x1 - x0;
    const int ph = y1 - y0;
    if (pw <= 0 || ph <= 0) throw Error(Errc::DegenerateBox, "box covers zero pixels");
    const int side = std::max(pw, ph);
    int wx = x0 - (side - pw) / 2;
    int wy = y0 - (side - ph) / 2;
    wx = place(wx, side, image_width);
    wy = place(wy, side, image_height);
    return {wx, wy, side};
}

Image resample(const Image& src, const CropWindow& window, int side, ResizeFilter filter) {
    Image out(side, side);
    const double scale = static_cast<double>(window.side) / side;
    for (int y = 0; y < side; ++y) {
        for (int x = 0; x < side; ++x) {
            if (filter == ResizeFilter::nearest) {
                const int sx = window.x0 + static_cast<int>(std::floor((x + 0.5) * scale));
                const int sy = window.y0 + static_cast<int>(std::floor((y + 0.5) * scale));
                for (int c = 0; c < 3; ++c) out.at(x, y, c) = src.clamped(sx, sy, c);
            } else {
                const double sx = window.x0 + (x + 0.5) * scale - 0.5;
                const double sy = window.y0 + (y + 0.5) * scale - 0.5;
                for (int c = 0; c < 3; ++c) out.at(x, y, c) = to_byte(bilinear_at(src, sx, sy, c));
            }
        }
    }
    return out;
}

CropRecord crop_and_resize(const Image& image, const Detection& det, const CropConfig& cfg, std::string_view image_id,
                           std::size_t box_index) {
    if (cfg.side < 8) throw Error(Errc::InvalidArgument, "crop side must be at least 8");
    if (image.empty()) throw Error(Errc::NoPixels, "source image has no pixels");
    const auto window = square_window(image.width(), image.height(), det.bbox);
    CropRecord rec;
    rec.image_id = std::string(image_id);
    rec.box_index = box_index;
    rec.crop_id = make_crop_id(image_id, box_index, 0);
    rec.detector_confidence = det.confidence;
    rec.pixels = resample(image, window, cfg.side, cfg.filter);
    return rec;
}

Image flip_horizontal(const Image& img) {
    Image out = img;
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            for (int c = 0; c < 3; ++c) out.at(x, y, c) = img.at(img.width() - 1 - x, y, c);
        }
    }
    return out;
}

Image rotate(const Image& img, double degrees) {
    const double rad = degrees * std::numbers::pi / 180.0;
    const double cs = std::cos(rad);
    const double sn = std::sin(rad);
    const double cx = (img.width() - 1) / 2.0;
    const double cy = (img.height() - 1) / 2.0;
    Image out(img.width(), img.height());
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            const double dx = x - cx;
            const double dy = y - cy;
            // inverse mapping: rotate the output coordinate back by -angle
            const double sx = cs * dx + sn * dy + cx;
            const double sy = -sn * dx + cs * dy + cy;
            for (int c = 0; c < 3; ++c) out.at(x, y, c) = to_byte(bilinear_at(img, sx, sy, c));
        }
    }
    return out;
}

Image adjust_contrast(const Image& img, double factor) {
    std::array<double, 3> mean{0, 0, 0};
    const double n = static_cast<double>(img.width()) * img.height();
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            for (int c = 0; c < 3; ++c) mean[c] += img.at(x, y, c);
        }
    }
    for (auto& m : mean) m /= n;
    Image out = img;
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            for (int c = 0; c < 3; ++c) out.at(x, y, c) = to_byte((img.at(x, y, c) - mean[c]) * factor + mean[c]);
        }
    }
    return out;
}

namespace {

enum class AugOp { rotate, hflip, contrast };

}  // namespace

std::vector<CropRecord> augment(const CropRecord& crop, const AugmentationPolicy& policy, int k) {
    if (k < 0 || k > policy.max_augmentations_per_crop) {
        throw Error(Errc::InvalidArgument, "augmentation count outside [0, max_augmentations_per_crop]");
    }
    std::vector<CropRecord> out;
    if (k == 0) return out;
    if (!crop.pixels) throw Error(Errc::NoPixels, crop.crop_id);
    out.reserve(k);
    for (int j = 0; j < k; ++j) {
        auto rng = make_rng(policy.seed, crop.crop_id + "/aug" + std::to_string(j));
        std::array<AugOp, 3> ops{AugOp::rotate, AugOp::hflip, AugOp::contrast};
        std::shuffle(ops.begin(), ops.end(), rng);
        const int n_ops = std::uniform_int_distribution<int>(1, 3)(rng);
        std::array<bool, 3> chosen{false, false, false};
        for (int i = 0; i < n_ops; ++i) chosen[static_cast<int>(ops[i])] = true;

        // Parameters are always drawn so the stream does not depend on which ops were chosen.
        const double angle = std::uniform_real_distribution<double>(-policy.max_rotation_degrees,
                                                                    policy.max_rotation_degrees)(rng);
        const double factor = std::uniform_real_distribution<double>(policy.contrast_min, policy.contrast_max)(rng);

        std::string desc;
        auto append = [&](const std::string& part) {
            if (!desc.empty()) desc += ';';
            desc += part;
        };
        if (chosen[0]) append("rotate=" + csv::format_double(angle));
        if (chosen[1]) append("hflip");
        if (chosen[2]) append("contrast=" + csv::format_double(factor));

        CropRecord variant;
        variant.image_id = crop.image_id;
        variant.box_index = crop.box_index;
        variant.aug_index = j + 1;
        variant.crop_id = make_crop_id(crop.image_id, crop.box_index, j + 1);
        variant.detector_confidence = crop.detector_confidence;
        variant.aug_descriptor = desc;
        variant.pixels = apply_descriptor(*crop.pixels, desc);
        out.push_back(std::move(variant));
    }
    return out;
}

Image apply_descriptor(const Image& img, std::string_view descriptor) {
    Image out = img;
    std::size_t pos = 0;
    while (pos <= descriptor.size()) {
        auto end = descriptor.find(';', pos);
        if (end == std::string_view::npos) end = descriptor.size();
        const auto part = descriptor.substr(pos, end - pos);
        if (!part.empty()) {
            const auto eq = part.find('=');
            const auto name = part.substr(0, eq);
            double value = 0;
            if (eq != std::string_view::npos) {
                const auto text = part.substr(eq + 1);
                auto res = std::from_chars(text.data(), text.data() + text.size(), value);
                if (res.ec != std::errc{}) throw Error(Errc::InvalidArgument, "bad augmentation parameter");
            }
            if (name == "rotate") {
                out = rotate(out, value);
            } else if (name == "hflip") {
                out = flip_horizontal(out);
            } else if (name == "contrast") {
                out = adjust_contrast(out, value);
            } else {
                throw Error(Errc::InvalidArgument, "unknown augmentation '" + std::string(name) + "'");
            }
        }
        pos = end + 1;
    }
    return out;
}

}  // namespace wildal
