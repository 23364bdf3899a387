#include "wildal/classifier.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "wildal/error.hpp"
#include "wildal/random.hpp"

namespace wildal {

namespace {

std::size_t parameter_count(std::size_t g, std::size_t dim, std::size_t hidden) {
    if (hidden == 0) return g * dim + g;
    return hidden * dim + hidden + g * hidden + g;
}

void check_config(const TrainConfig& c) {
    if (!(c.learning_rate >= 0) || c.epochs < 1 || c.batch_size < 1 || !(c.l2 >= 0)) {
        throw Error(Errc::InvalidArgument, "train config needs learning_rate >= 0, epochs >= 1, batch_size >= 1, l2 >= 0");
    }
}

}  // namespace

HeadModel::HeadModel(LabelSpace labels, std::size_t dim, TrainConfig config)
    : labels_(std::move(labels)), dim_(dim), config_(config) {
    if (dim_ < 1) throw Error(Errc::DimensionMismatch, "head input dimension must be >= 1");
    check_config(config_);
    params_.assign(parameter_count(labels_.size(), dim_, config_.hidden_units), 0.0);
}

HeadModel HeadModel::cold_start(LabelSpace labels, std::size_t dim, TrainConfig config) {
    HeadModel head(std::move(labels), dim, config);
    Rng rng(mix_seed(config.seed, 0x4EADu));
    auto fill = [&](std::size_t offset, std::size_t count, std::size_t fan_in) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        std::uniform_real_distribution<double> u(-bound, bound);
        for (std::size_t i = 0; i < count; ++i) head.params_[offset + i] = u(rng);
    };
    if (head.hidden()) {
        fill(0, head.hidden() * dim, dim);
    }
    fill(head.output_weight_offset(), head.classes() * head.output_inputs(), head.output_inputs());
    return head;
}

std::size_t HeadModel::output_weight_offset() const noexcept {
    return hidden() ? hidden() * dim_ + hidden() : 0;
}

std::span<const double> HeadModel::output_row(std::size_t k) const {
    return std::span<const double>(params_).subspan(output_weight_offset() + k * output_inputs(), output_inputs());
}

namespace {

// Forward pass; fills `activations` with the hidden layer when present.
void forward(const HeadModel& head, std::span<const float> x, std::vector<double>& activations,
             std::vector<double>& logits) {
    const auto p = head.parameters();
    const std::size_t dim = head.dim();
    if (head.hidden()) {
        const std::size_t h = head.hidden();
        activations.assign(h, 0.0);
        const double* w1 = p.data();
        const double* b1 = p.data() + h * dim;
        for (std::size_t j = 0; j < h; ++j) {
            double z = b1[j];
            const double* row = w1 + j * dim;
            for (std::size_t d = 0; d < dim; ++d) z += row[d] * static_cast<double>(x[d]);
            activations[j] = std::tanh(z);
        }
    }
    const std::size_t g = head.classes();
    const std::size_t in = head.output_inputs();
    const double* w = p.data() + head.output_weight_offset();
    const double* b = p.data() + head.output_bias_offset();
    logits.assign(g, 0.0);
    for (std::size_t k = 0; k < g; ++k) {
        double z = b[k];
        const double* row = w + k * in;
        if (head.hidden()) {
            for (std::size_t j = 0; j < in; ++j) z += row[j] * activations[j];
        } else {
            for (std::size_t d = 0; d < in; ++d) z += row[d] * static_cast<double>(x[d]);
        }
        logits[k] = z;
    }
}

double l2_term(const HeadModel& head) {
    const auto p = head.parameters();
    double s = 0;
    auto add = [&](std::size_t offset, std::size_t count) {
        for (std::size_t i = 0; i < count; ++i) s += p[offset + i] * p[offset + i];
    };
    if (head.hidden()) add(0, head.hidden() * head.dim());
    add(head.output_weight_offset(), head.classes() * head.output_inputs());
    return 0.5 * head.config().l2 * s;
}

void check_data(const HeadModel& head, const TrainingSet& data, std::span<const std::size_t> rows,
                std::span<const double> weights) {
    if (data.dim != head.dim()) {
        throw Error(Errc::DimensionMismatch, "data dim " + std::to_string(data.dim) + " != head dim " +
                                                 std::to_string(head.dim()));
    }
    if (weights.size() != head.classes()) throw Error(Errc::LengthMismatch, "one class weight per class required");
    for (auto r : rows) {
        if (r >= data.size()) throw Error(Errc::InvalidArgument, "row index out of range");
        if (data.labels[r] >= head.classes()) {
            throw Error(Errc::UnknownLabel, "class index " + std::to_string(data.labels[r]) + " outside label space");
        }
    }
}

LossGradient evaluate(const HeadModel& head, const TrainingSet& data, std::span<const std::size_t> rows,
                      std::span<const double> weights, bool want_gradient) {
    check_data(head, data, rows, weights);
    LossGradient out;
    if (want_gradient) out.gradient.assign(head.parameters().size(), 0.0);

    double weight_sum = 0;
    for (auto r : rows) weight_sum += weights[data.labels[r]];
    if (rows.empty() || !(weight_sum > 0)) {
        out.loss = l2_term(head);
        if (want_gradient) {
            // only the penalty contributes
            const auto p = head.parameters();
            auto add = [&](std::size_t offset, std::size_t count) {
                for (std::size_t i = 0; i < count; ++i) out.gradient[offset + i] = head.config().l2 * p[offset + i];
            };
            if (head.hidden()) add(0, head.hidden() * head.dim());
            add(head.output_weight_offset(), head.classes() * head.output_inputs());
        }
        return out;
    }

    const std::size_t g = head.classes();
    const std::size_t dim = head.dim();
    const std::size_t h = head.hidden();
    const std::size_t in = head.output_inputs();
    const auto p = head.parameters();
    const std::size_t wo = head.output_weight_offset();
    const std::size_t bo = head.output_bias_offset();

    std::vector<double> act, logits, delta(g), dact(h);
    double loss = 0;
    for (auto r : rows) {
        const auto x = data.row(r);
        const std::size_t y = data.labels[r];
        const double wi = weights[y] / weight_sum;
        if (wi == 0) continue;
        forward(head, x, act, logits);
        const double mx = *std::max_element(logits.begin(), logits.end());
        double z = 0;
        for (double l : logits) z += std::exp(l - mx);
        const double log_z = mx + std::log(z);
        loss += wi * (log_z - logits[y]);
        if (!want_gradient) continue;

        for (std::size_t k = 0; k < g; ++k) {
            delta[k] = wi * (std::exp(logits[k] - log_z) - (k == y ? 1.0 : 0.0));
        }
        double* gw = out.gradient.data() + wo;
        double* gb = out.gradient.data() + bo;
        for (std::size_t k = 0; k < g; ++k) {
            double* grow = gw + k * in;
            if (h) {
                for (std::size_t j = 0; j < in; ++j) grow[j] += delta[k] * act[j];
            } else {
                for (std::size_t d = 0; d < in; ++d) grow[d] += delta[k] * static_cast<double>(x[d]);
            }
            gb[k] += delta[k];
        }
        if (h) {
            std::fill(dact.begin(), dact.end(), 0.0);
            for (std::size_t k = 0; k < g; ++k) {
                const double* row = p.data() + wo + k * in;
                for (std::size_t j = 0; j < h; ++j) dact[j] += row[j] * delta[k];
            }
            double* gw1 = out.gradient.data();
            double* gb1 = out.gradient.data() + h * dim;
            for (std::size_t j = 0; j < h; ++j) {
                const double dz = dact[j] * (1.0 - act[j] * act[j]);
                double* grow = gw1 + j * dim;
                for (std::size_t d = 0; d < dim; ++d) grow[d] += dz * static_cast<double>(x[d]);
                gb1[j] += dz;
            }
        }
    }
    out.loss = loss + l2_term(head);
    if (want_gradient) {
        const double l2 = head.config().l2;
        if (h) {
            for (std::size_t i = 0; i < h * dim; ++i) out.gradient[i] += l2 * p[i];
        }
        for (std::size_t i = 0; i < g * in; ++i) out.gradient[wo + i] += l2 * p[wo + i];
    }
    return out;
}

}  // namespace

std::vector<double> softmax(std::span<const double> logits) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> out(logits.size());
    double z = 0;
    for (std::size_t k = 0; k < logits.size(); ++k) {
        out[k] = std::exp(logits[k] - mx);
        z += out[k];
    }
    for (auto& v : out) v /= z;
    return out;
}

std::vector<double> HeadModel::logits(std::span<const float> x) const {
    if (x.size() != dim_) {
        throw Error(Errc::DimensionMismatch, "embedding has " + std::to_string(x.size()) + " values, head expects " +
                                                 std::to_string(dim_));
    }
    std::vector<double> act, out;
    forward(*this, x, act, out);
    return out;
}

std::vector<double> HeadModel::predict_scores(std::span<const float> x) const { return softmax(logits(x)); }

void TrainingSet::add(std::span<const float> x, std::size_t label) {
    if (dim == 0) dim = x.size();
    if (x.size() != dim) throw Error(Errc::DimensionMismatch, "training row has wrong dimension");
    features.insert(features.end(), x.begin(), x.end());
    labels.push_back(label);
}

std::vector<double> class_weights(const TrainingSet& data, std::size_t classes, ClassWeighting mode) {
    std::vector<double> w(classes, 1.0);
    if (mode == ClassWeighting::none) return w;
    std::vector<std::size_t> counts(classes, 0);
    for (auto y : data.labels) {
        if (y >= classes) throw Error(Errc::UnknownLabel, "class index outside label space");
        ++counts[y];
    }
    const auto present = static_cast<double>(std::count_if(counts.begin(), counts.end(), [](auto c) { return c > 0; }));
    const auto n = static_cast<double>(data.size());
    for (std::size_t k = 0; k < classes; ++k) w[k] = counts[k] ? n / (present * static_cast<double>(counts[k])) : 0.0;
    return w;
}

LossGradient loss_and_gradient(const HeadModel& head, const TrainingSet& data, std::span<const std::size_t> rows,
                               std::span<const double> weights) {
    return evaluate(head, data, rows, weights, true);
}

double objective(const HeadModel& head, const TrainingSet& data, std::span<const std::size_t> rows,
                 std::span<const double> weights) {
    return evaluate(head, data, rows, weights, false).loss;
}

TrainResult train(HeadModel head, const TrainingSet& data) {
    if (data.size() == 0) throw Error(Errc::EmptyTrainingSet, "no training examples");
    if (data.dim != head.dim()) {
        throw Error(Errc::DimensionMismatch, "data dim " + std::to_string(data.dim) + " != head dim " +
                                                 std::to_string(head.dim()));
    }
    const auto& cfg = head.config();
    check_config(cfg);
    const auto weights = class_weights(data, head.classes(), cfg.class_weighting);

    std::vector<std::size_t> all(data.size());
    std::iota(all.begin(), all.end(), 0);
    std::vector<std::size_t> order = all;

    TrainResult result{head, {}};
    HeadModel& model = result.model;
    const auto batch = static_cast<std::size_t>(cfg.batch_size);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch) + 1));
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const std::size_t end = std::min(order.size(), start + batch);
            const std::span<const std::size_t> rows(order.data() + start, end - start);
            const auto lg = loss_and_gradient(model, data, rows, weights);
            auto p = model.parameters();
            for (std::size_t i = 0; i < p.size(); ++i) p[i] -= cfg.learning_rate * lg.gradient[i];
        }
        const double loss = objective(model, data, all, weights);
        if (!std::isfinite(loss)) {
            throw Error(Errc::InvalidArgument, "training diverged at epoch " + std::to_string(epoch) +
                                                   "; lower the learning rate");
        }
        result.loss_curve.push_back(loss);
    }
    return result;
}

double stable_learning_rate(const TrainingSet& data, double l2) {
    double max_sq = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        double s = 0;
        for (float v : data.row(i)) s += static_cast<double>(v) * v;
        max_sq = std::max(max_sq, s);
    }
    return 1.0 / (0.5 * (max_sq + 1.0) + l2);
}

HeadModel warm_start(const HeadModel& source, const LabelSpace& new_labels, std::size_t dim, std::string source_ref) {
    if (dim != source.dim()) {
        throw Error(Errc::DimensionMismatch, "warm start needs dim " + std::to_string(source.dim()) + ", got " +
                                                 std::to_string(dim));
    }
    HeadModel head = HeadModel::cold_start(new_labels, dim, source.config());
    auto dst = head.parameters();
    const auto src = source.parameters();
    // Only a shared animal class makes the source informative; "empty" is in every space.
    bool any_overlap = false;
    for (std::size_t k = 0; k < new_labels.size(); ++k) {
        if (k != new_labels.empty_index() && source.label_space().contains(new_labels.name(k))) any_overlap = true;
    }
    for (std::size_t k = 0; any_overlap && k < new_labels.size(); ++k) {
        auto from = source.label_space().index_of(new_labels.name(k));
        if (!from) continue;
        const auto in = head.output_inputs();
        std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(source.output_weight_offset() + *from * in), in,
                    dst.begin() + static_cast<std::ptrdiff_t>(head.output_weight_offset() + k * in));
        dst[head.output_bias_offset() + k] = src[source.output_bias_offset() + *from];
    }
    // Output rows are only meaningful on top of the hidden layer they were trained with.
    if (any_overlap && head.hidden()) {
        std::copy_n(src.begin(), static_cast<std::ptrdiff_t>(head.output_weight_offset()), dst.begin());
    }
    head.set_provenance({Provenance::Kind::warm, std::move(source_ref)});
    return head;
}

namespace {

constexpr char kHeadMagic[6] = {'W', 'L', 'H', 'E', 'A', 'D'};
constexpr std::uint32_t kHeadVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

void put_string(std::ostream& out, const std::string& s) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <typename T>
T get(std::istream& in) {
    T v;
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw Error(Errc::CorruptState, "truncated checkpoint");
    return v;
}

std::string get_string(std::istream& in) {
    const auto n = get<std::uint32_t>(in);
    if (n > (1u << 20)) throw Error(Errc::CorruptState, "implausible string length in checkpoint");
    std::string s(n, '\0');
    if (n && !in.read(s.data(), n)) throw Error(Errc::CorruptState, "truncated checkpoint");
    return s;
}

}  // namespace

void save_checkpoint(const HeadModel& head, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::IoFailure, "cannot write " + path.string());
    out.write(kHeadMagic, sizeof(kHeadMagic));
    put<std::uint32_t>(out, kHeadVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(head.classes()));
    for (const auto& name : head.label_space().names()) put_string(out, name);
    put<std::uint64_t>(out, head.dim());
    const auto& c = head.config();
    put<double>(out, c.learning_rate);
    put<std::int32_t>(out, c.epochs);
    put<std::int32_t>(out, c.batch_size);
    put<double>(out, c.l2);
    put<std::uint64_t>(out, c.seed);
    put<std::uint8_t>(out, static_cast<std::uint8_t>(c.class_weighting));
    put<std::uint64_t>(out, c.hidden_units);
    put<std::uint8_t>(out, static_cast<std::uint8_t>(head.provenance().kind));
    put_string(out, head.provenance().source);
    const auto p = head.parameters();
    put<std::uint64_t>(out, p.size());
    out.write(reinterpret_cast<const char*>(p.data()), static_cast<std::streamsize>(p.size_bytes()));
    if (!out) throw Error(Errc::IoFailure, "write failed for " + path.string());
}

HeadModel load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::MissingFile, path.string());
    char magic[sizeof(kHeadMagic)];
    if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kHeadMagic, sizeof(magic)) != 0) {
        throw Error(Errc::CorruptState, path.string() + " is not a head checkpoint");
    }
    const auto version = get<std::uint32_t>(in);
    if (version != kHeadVersion) {
        throw Error(Errc::VersionMismatch, "checkpoint version " + std::to_string(version) + " unsupported");
    }
    const auto g = get<std::uint32_t>(in);
    if (g > 100000) throw Error(Errc::CorruptState, "implausible class count");
    std::vector<std::string> names;
    for (std::uint32_t i = 0; i < g; ++i) names.push_back(get_string(in));
    const auto dim = get<std::uint64_t>(in);
    TrainConfig c;
    c.learning_rate = get<double>(in);
    c.epochs = get<std::int32_t>(in);
    c.batch_size = get<std::int32_t>(in);
    c.l2 = get<double>(in);
    c.seed = get<std::uint64_t>(in);
    c.class_weighting = static_cast<ClassWeighting>(get<std::uint8_t>(in));
    c.hidden_units = get<std::uint64_t>(in);
    Provenance prov;
    prov.kind = static_cast<Provenance::Kind>(get<std::uint8_t>(in));
    prov.source = get_string(in);
    const auto n = get<std::uint64_t>(in);

    HeadModel head = [&] {
        try {
            return HeadModel::cold_start(LabelSpace(names), dim, c);
        } catch (const Error& e) {
            throw Error(Errc::CorruptState, e.what());
        }
    }();
    auto p = head.parameters();
    if (n != p.size()) throw Error(Errc::CorruptState, "parameter count does not match architecture");
    if (!in.read(reinterpret_cast<char*>(p.data()), static_cast<std::streamsize>(p.size_bytes()))) {
        throw Error(Errc::CorruptState, "truncated parameters");
    }
    for (double v : p) {
        if (!std::isfinite(v)) throw Error(Errc::CorruptState, "non-finite parameter");
    }
    head.set_provenance(prov);
    return head;
}

}  // namespace wildal
