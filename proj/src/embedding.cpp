#include "wildal/embedding.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "wildal/error.hpp"

namespace wildal {

static_assert(std::endian::native == std::endian::little, "store I/O assumes a little-endian host");

EmbeddingStore::EmbeddingStore(EmbedderId provider) : provider_(std::move(provider)) {
    if (provider_.dim < 1) throw Error(Errc::InvalidArgument, "embedding dim must be >= 1");
}

void EmbeddingStore::add(std::string crop_id, std::span<const float> values) {
    if (values.size() != provider_.dim) {
        throw Error(Errc::DimensionMismatch, crop_id + ": expected " + std::to_string(provider_.dim) + " values, got " +
                                                 std::to_string(values.size()));
    }
    for (float v : values) {
        if (!std::isfinite(v)) throw Error(Errc::InvalidArgument, crop_id + ": non-finite embedding value");
    }
    if (!index_.emplace(crop_id, ids_.size()).second) {
        throw Error(Errc::InvalidArgument, "duplicate crop_id '" + crop_id + "'");
    }
    ids_.push_back(std::move(crop_id));
    data_.insert(data_.end(), values.begin(), values.end());
}

std::optional<std::span<const float>> EmbeddingStore::find(std::string_view crop_id) const {
    auto it = index_.find(std::string(crop_id));
    if (it == index_.end()) return std::nullopt;
    return row(it->second);
}

std::span<const float> EmbeddingStore::row(std::size_t i) const {
    return std::span<const float>(data_).subspan(i * provider_.dim, provider_.dim);
}

bool EmbeddingStore::same_content(const EmbeddingStore& other) const {
    if (!(provider_ == other.provider_) || rows() != other.rows()) return false;
    for (std::size_t i = 0; i < rows(); ++i) {
        auto theirs = other.find(ids_[i]);
        if (!theirs) return false;
        auto mine = row(i);
        if (std::memcmp(mine.data(), theirs->data(), mine.size_bytes()) != 0) return false;
    }
    return true;
}

namespace {

constexpr char kMagic[6] = {'W', 'L', 'E', 'M', 'B', '1'};

template <typename T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

void put_string(std::ostream& out, const std::string& s) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <typename T>
T get(std::istream& in, const std::string& what) {
    T v;
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw Error(Errc::CorruptStore, "truncated " + what);
    return v;
}

std::string get_string(std::istream& in, const std::string& what) {
    const auto n = get<std::uint32_t>(in, what + " length");
    if (n > (1u << 20)) throw Error(Errc::CorruptStore, what + " length " + std::to_string(n) + " is implausible");
    std::string s(n, '\0');
    if (n && !in.read(s.data(), n)) throw Error(Errc::CorruptStore, "truncated " + what);
    return s;
}

}  // namespace

void write_store(const EmbeddingStore& store, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::IoFailure, "cannot write " + path.string());
    out.write(kMagic, sizeof(kMagic));
    put_string(out, store.provider().name);
    put<std::uint32_t>(out, store.provider().dim);
    put<std::uint64_t>(out, store.rows());
    for (std::size_t i = 0; i < store.rows(); ++i) {
        put_string(out, store.crop_ids()[i]);
        const auto r = store.row(i);
        out.write(reinterpret_cast<const char*>(r.data()), static_cast<std::streamsize>(r.size_bytes()));
    }
    if (!out) throw Error(Errc::IoFailure, "write failed for " + path.string());
}

EmbeddingStore read_store(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::MissingFile, path.string());
    char magic[sizeof(kMagic)];
    if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw Error(Errc::CorruptStore, path.string() + ": bad magic");
    }
    EmbedderId id;
    id.name = get_string(in, "provider name");
    id.dim = get<std::uint32_t>(in, "dim");
    if (id.dim == 0) throw Error(Errc::CorruptStore, "zero dimension");
    const auto rows = get<std::uint64_t>(in, "row count");
    EmbeddingStore store(id);
    std::vector<float> buf(id.dim);
    for (std::uint64_t r = 0; r < rows; ++r) {
        auto crop_id = get_string(in, "crop_id");
        if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)))) {
            throw Error(Errc::CorruptStore, "truncated row " + std::to_string(r));
        }
        try {
            store.add(std::move(crop_id), buf);
        } catch (const Error& e) {
            throw Error(Errc::CorruptStore, e.what());
        }
    }
    if (in.peek() != std::char_traits<char>::eof()) throw Error(Errc::CorruptStore, "trailing bytes after last row");
    return store;
}

std::vector<double> ToyEmbedder::features(const Image& img) {
    const int w = img.width();
    const int h = img.height();
    const double n = static_cast<double>(w) * h;
    std::vector<double> out(kDim, 0.0);
    // mean and variance per channel
    for (int c = 0; c < 3; ++c) {
        double sum = 0;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) sum += img.at(x, y, c);
        const double mean = sum / n;
        double sq = 0;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const double d = img.at(x, y, c) - mean;
                sq += d * d;
            }
        out[c] = mean / 255.0;
        out[3 + c] = sq / n / (255.0 * 255.0);
    }
    // 4x4 grid of block means; block edges at floor(i*extent/4)
    for (int by = 0; by < 4; ++by) {
        const int y0 = by * h / 4, y1 = (by + 1) * h / 4;
        for (int bx = 0; bx < 4; ++bx) {
            const int x0 = bx * w / 4, x1 = (bx + 1) * w / 4;
            const double count = static_cast<double>(x1 - x0) * (y1 - y0);
            for (int c = 0; c < 3; ++c) {
                double sum = 0;
                for (int y = y0; y < y1; ++y)
                    for (int x = x0; x < x1; ++x) sum += img.at(x, y, c);
                out[6 + (by * 4 + bx) * 3 + c] = count > 0 ? sum / count / 255.0 : 0.0;
            }
        }
    }
    return out;
}

std::vector<float> ToyEmbedder::embed(const CropRecord& crop) const {
    if (!crop.pixels) throw Error(Errc::NoPixels, crop.crop_id);
    const auto f = features(*crop.pixels);
    return {f.begin(), f.end()};
}

double toy_lipschitz_bound(int side) {
    const double b = std::floor(side / 4.0);
    return 1.0 / (255.0 * b * b);
}

std::vector<float> StoreEmbedder::embed(const CropRecord& crop) const {
    auto row = store_->find(crop.crop_id);
    if (!row) throw Error(Errc::MissingEmbedding, crop.crop_id);
    return {row->begin(), row->end()};
}

void EmbedderRegistry::add(std::shared_ptr<const Embedder> embedder) {
    auto name = embedder->id().name;
    if (!embedders_.emplace(name, std::move(embedder)).second) {
        throw Error(Errc::InvalidArgument, "embedder '" + name + "' registered twice");
    }
}

const Embedder& EmbedderRegistry::get(std::string_view name) const {
    auto it = embedders_.find(name);
    if (it == embedders_.end()) throw Error(Errc::UnknownProvider, std::string(name));
    return *it->second;
}

bool EmbedderRegistry::contains(std::string_view name) const { return embedders_.find(name) != embedders_.end(); }

std::vector<std::string> EmbedderRegistry::names() const {
    std::vector<std::string> out;
    for (const auto& [name, _] : embedders_) out.push_back(name);
    return out;
}

std::vector<EmbeddingVector> embed(std::span<const CropRecord> crops, const EmbedderRegistry& registry,
                                   std::string_view provider) {
    const auto& embedder = registry.get(provider);
    const auto dim = embedder.id().dim;
    std::vector<EmbeddingVector> out;
    out.reserve(crops.size());
    for (const auto& crop : crops) {
        auto values = embedder.embed(crop);
        if (values.size() != dim) throw Error(Errc::DimensionMismatch, crop.crop_id);
        out.push_back({crop.crop_id, std::move(values)});
    }
    return out;
}

}  // namespace wildal
