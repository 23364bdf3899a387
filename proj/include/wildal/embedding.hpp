#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "wildal/imaging.hpp"

namespace wildal {

struct EmbedderId {
    std::string name;
    std::uint32_t dim = 0;
    friend bool operator==(const EmbedderId&, const EmbedderId&) = default;
};

struct EmbeddingVector {
    std::string crop_id;
    std::vector<float> values;
};

/// Dense float32 matrix of embeddings indexed by crop_id. Immutable once
/// shared; `add` is for the single writer building it.
class EmbeddingStore {
public:
    EmbeddingStore() = default;
    explicit EmbeddingStore(EmbedderId provider);

    const EmbedderId& provider() const noexcept { return provider_; }
    std::size_t rows() const noexcept { return ids_.size(); }
    const std::vector<std::string>& crop_ids() const noexcept { return ids_; }

    // Throws DimensionMismatch, or InvalidArgument on a duplicate id or non-finite value.
    void add(std::string crop_id, std::span<const float> values);
    std::optional<std::span<const float>> find(std::string_view crop_id) const;
    std::span<const float> row(std::size_t i) const;

    // Same provider and identical (crop_id -> values) mapping, regardless of row order.
    bool same_content(const EmbeddingStore& other) const;

private:
    EmbedderId provider_;
    std::vector<std::string> ids_;
    std::unordered_map<std::string, std::size_t> index_;
    std::vector<float> data_;
};

// Binary layout: "WLEMB1", name (u32 length + UTF-8), dim (u32 LE),
// rows (u64 LE), then per row crop_id (u32 length + UTF-8) and dim float32 LE.
void write_store(const EmbeddingStore& store, const std::filesystem::path& path);
EmbeddingStore read_store(const std::filesystem::path& path);

class Embedder {
public:
    virtual ~Embedder() = default;
    virtual EmbedderId id() const = 0;
    virtual bool needs_pixels() const = 0;
    virtual std::vector<float> embed(const CropRecord& crop) const = 0;
};

/// Deterministic hand-made features: per-channel mean and variance plus 4x4
/// block means per channel, scaled to [0,1] (54 values).
///
/// Changing one pixel channel by 1 changes any entry by at most
/// toy_lipschitz_bound(side) = 1 / (255 * floor(side/4)^2).
class ToyEmbedder final : public Embedder {
public:
    static constexpr std::uint32_t kDim = 54;
    EmbedderId id() const override { return {"toy", kDim}; }
    bool needs_pixels() const override { return true; }
    std::vector<float> embed(const CropRecord& crop) const override;
    static std::vector<double> features(const Image& img);
};

double toy_lipschitz_bound(int side);

/// Serves precomputed vectors from a store (external CNN backbones).
class StoreEmbedder final : public Embedder {
public:
    explicit StoreEmbedder(std::shared_ptr<const EmbeddingStore> store) : store_(std::move(store)) {}
    EmbedderId id() const override { return store_->provider(); }
    bool needs_pixels() const override { return false; }
    // Throws MissingEmbedding.
    std::vector<float> embed(const CropRecord& crop) const override;

private:
    std::shared_ptr<const EmbeddingStore> store_;
};

class EmbedderRegistry {
public:
    // Throws InvalidArgument on a duplicate name.
    void add(std::shared_ptr<const Embedder> embedder);
    // Throws UnknownProvider.
    const Embedder& get(std::string_view name) const;
    bool contains(std::string_view name) const;
    std::vector<std::string> names() const;

private:
    std::map<std::string, std::shared_ptr<const Embedder>, std::less<>> embedders_;
};

std::vector<EmbeddingVector> embed(std::span<const CropRecord> crops, const EmbedderRegistry& registry,
                                   std::string_view provider);

}  // namespace wildal
