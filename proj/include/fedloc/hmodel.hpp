#pragma once

// Hierarchical multitask MLP (H-MLP) and its flat baseline, the weighted
// multitask loss, central training, prediction and evaluation.
//
// Topology (widths for the default configuration):
//
//   input -> [256 -> 128 shared trunk] --+--> building head (softmax)
//                                        |         | wiring
//                                        +--> floor branch (128) -> softmax
//                                        |                           | wiring
//                                        +--> location branch (128) -> linear (x, y)
//
// Each hidden layer is dense -> batch-norm -> ReLU -> dropout. With wiring
// `none` the three heads read the trunk only (flat baseline).

#include "fedloc/common.hpp"
#include "fedloc/dataset.hpp"
#include "fedloc/io.hpp"
#include "fedloc/metrics.hpp"
#include "fedloc/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fedloc {

enum class Wiring { concat_probs, concat_logits, none };

inline std::string to_string(Wiring w) {
    switch (w) {
        case Wiring::concat_probs: return "concat-probs";
        case Wiring::concat_logits: return "concat-logits";
        case Wiring::none: return "flat";
    }
    return "flat";
}

inline Wiring parse_wiring(std::string_view s) {
    if (s == "concat-probs") {
        return Wiring::concat_probs;
    }
    if (s == "concat-logits") {
        return Wiring::concat_logits;
    }
    if (s == "flat" || s == "none") {
        return Wiring::none;
    }
    throw UsageError("unknown wiring '" + std::string(s) + "'");
}

struct LossWeights {
    double building = 0.1;
    double floor = 0.3;
    double location = 0.6;

    [[nodiscard]] double sum() const { return building + floor + location; }
};

struct HMlpConfig {
    std::size_t input_dim = 248;
    std::vector<std::size_t> common_layers{256, 128};
    double common_dropout = 0.3;
    int building_classes = 3;
    std::size_t floor_hidden = 128;
    double floor_dropout = 0.1;
    int floor_classes = 5;
    std::size_t location_hidden = 128;
    double location_dropout = 0.1;
    LossWeights weights;
    Wiring wiring = Wiring::concat_probs;
    double bn_momentum = 0.99;
    double bn_epsilon = 1e-3;

    void validate() const {
        if (input_dim == 0 || common_layers.empty() || floor_hidden == 0 || location_hidden == 0) {
            throw ConfigError("layer widths must be positive and the trunk non-empty");
        }
        for (auto w : common_layers) {
            if (w == 0) {
                throw ConfigError("trunk layer width must be positive");
            }
        }
        if (building_classes < 1 || floor_classes < 1) {
            throw ConfigError("class counts must be at least 1");
        }
        if (!(weights.building > 0.0 && weights.floor > 0.0 && weights.location > 0.0)) {
            throw ConfigError("loss weights must be positive");
        }
        for (double r : {common_dropout, floor_dropout, location_dropout}) {
            if (!(r >= 0.0 && r < 1.0)) {
                throw ConfigError("dropout rates must lie in [0, 1)");
            }
        }
    }

    [[nodiscard]] std::size_t trunk_width() const { return common_layers.back(); }

    [[nodiscard]] std::size_t floor_input_width() const {
        return trunk_width() + (wiring == Wiring::none ? 0 : static_cast<std::size_t>(building_classes));
    }

    [[nodiscard]] std::size_t location_input_width() const {
        return trunk_width() + (wiring == Wiring::none ? 0 : static_cast<std::size_t>(floor_classes));
    }

    /// Architecture description, one `arch.*` key per field.
    [[nodiscard]] io::Manifest manifest() const {
        io::Manifest m;
        m.set("arch.input_dim", std::to_string(input_dim));
        std::string layers;
        for (std::size_t i = 0; i < common_layers.size(); ++i) {
            layers += (i ? "," : "") + std::to_string(common_layers[i]);
        }
        m.set("arch.common_layers", layers);
        m.set("arch.common_dropout", io::format_double(common_dropout));
        m.set("arch.building_classes", std::to_string(building_classes));
        m.set("arch.floor_hidden", std::to_string(floor_hidden));
        m.set("arch.floor_dropout", io::format_double(floor_dropout));
        m.set("arch.floor_classes", std::to_string(floor_classes));
        m.set("arch.location_hidden", std::to_string(location_hidden));
        m.set("arch.location_dropout", io::format_double(location_dropout));
        m.set("arch.weight_building", io::format_double(weights.building));
        m.set("arch.weight_floor", io::format_double(weights.floor));
        m.set("arch.weight_location", io::format_double(weights.location));
        m.set("arch.wiring", to_string(wiring));
        m.set("arch.bn_momentum", io::format_double(bn_momentum));
        m.set("arch.bn_epsilon", io::format_double(bn_epsilon));
        m.set("arch.layer_order", "dense,batchnorm,relu,dropout");
        return m;
    }

    static HMlpConfig from_manifest(const io::Manifest& m) {
        HMlpConfig c;
        c.input_dim = m.get_number<std::size_t>("arch.input_dim");
        c.common_layers.clear();
        for (auto part : io::split(m.get("arch.common_layers"), ',')) {
            std::size_t w = 0;
            if (!io::parse_number(part, w)) {
                throw DataError("malformed arch.common_layers");
            }
            c.common_layers.push_back(w);
        }
        c.common_dropout = m.get_number<double>("arch.common_dropout");
        c.building_classes = m.get_number<int>("arch.building_classes");
        c.floor_hidden = m.get_number<std::size_t>("arch.floor_hidden");
        c.floor_dropout = m.get_number<double>("arch.floor_dropout");
        c.floor_classes = m.get_number<int>("arch.floor_classes");
        c.location_hidden = m.get_number<std::size_t>("arch.location_hidden");
        c.location_dropout = m.get_number<double>("arch.location_dropout");
        c.weights = {m.get_number<double>("arch.weight_building"), m.get_number<double>("arch.weight_floor"),
                     m.get_number<double>("arch.weight_location")};
        c.wiring = parse_wiring(m.get("arch.wiring"));
        c.bn_momentum = m.get_number<double>("arch.bn_momentum");
        c.bn_epsilon = m.get_number<double>("arch.bn_epsilon");
        c.validate();
        return c;
    }
};

/// Snapshot of every tensor of a network (trainable weights and batch-norm
/// running statistics), in traversal order.
template <typename T>
struct ModelParams {
    std::vector<std::string> names;
    std::vector<Tensor2<T>> tensors;
    std::vector<bool> trainable;

    [[nodiscard]] std::size_t size() const { return tensors.size(); }

    [[nodiscard]] std::size_t trainable_count() const {
        std::size_t n = 0;
        for (std::size_t i = 0; i < tensors.size(); ++i) {
            n += trainable[i] ? static_cast<std::size_t>(tensors[i].size()) : 0;
        }
        return n;
    }

    [[nodiscard]] bool same_layout(const ModelParams& other) const {
        if (names != other.names) {
            return false;
        }
        for (std::size_t i = 0; i < tensors.size(); ++i) {
            if (tensors[i].rows() != other.tensors[i].rows() || tensors[i].cols() != other.tensors[i].cols()) {
                return false;
            }
        }
        return true;
    }
};

/// FNV-1a over tensor names, shapes and raw bytes.
template <typename T>
std::uint64_t checksum(const ModelParams<T>& p) {
    Fnv1a h;
    for (std::size_t i = 0; i < p.size(); ++i) {
        h.update(p.names[i]);
        h.update_value(static_cast<std::int64_t>(p.tensors[i].rows()));
        h.update_value(static_cast<std::int64_t>(p.tensors[i].cols()));
        h.update(p.tensors[i].data(), static_cast<std::size_t>(p.tensors[i].size()) * sizeof(T));
    }
    return h.digest();
}

template <typename T>
struct HeadOutputs {
    Tensor2<T> building_logits;
    Tensor2<T> floor_logits;
    Tensor2<T> location;  // normalized (x, y)
    Tensor2<T> building_probs;
    Tensor2<T> floor_probs;
};

template <typename T>
struct HeadGrads {
    Tensor2<T> building_logits;
    Tensor2<T> floor_logits;
    Tensor2<T> location;
};

template <typename T>
class HMlp {
public:
    HMlp() = default;

    explicit HMlp(const HMlpConfig& cfg) : cfg_(cfg) {
        cfg_.validate();
        const T mom = static_cast<T>(cfg.bn_momentum);
        const T eps = static_cast<T>(cfg.bn_epsilon);
        auto in = static_cast<Eigen::Index>(cfg.input_dim);
        for (auto w : cfg.common_layers) {
            trunk_.emplace_back(in, static_cast<Eigen::Index>(w), cfg.common_dropout, mom, eps);
            in = static_cast<Eigen::Index>(w);
        }
        const auto trunk_w = in;
        building_out_ = nn::DenseLayer<T>(trunk_w, cfg.building_classes);
        floor_block_ = nn::HiddenBlock<T>(static_cast<Eigen::Index>(cfg.floor_input_width()),
                                          static_cast<Eigen::Index>(cfg.floor_hidden), cfg.floor_dropout, mom, eps);
        floor_out_ = nn::DenseLayer<T>(static_cast<Eigen::Index>(cfg.floor_hidden), cfg.floor_classes);
        location_block_ =
            nn::HiddenBlock<T>(static_cast<Eigen::Index>(cfg.location_input_width()),
                               static_cast<Eigen::Index>(cfg.location_hidden), cfg.location_dropout, mom, eps);
        location_out_ = nn::DenseLayer<T>(static_cast<Eigen::Index>(cfg.location_hidden), 2);
    }

    /// He-uniform for ReLU layers, Glorot-uniform for output heads.
    void initialize(Rng& rng) {
        for (auto& b : trunk_) {
            b.dense.initialize(nn::InitScheme::he_uniform, rng);
        }
        building_out_.initialize(nn::InitScheme::glorot_uniform, rng);
        floor_block_.dense.initialize(nn::InitScheme::he_uniform, rng);
        floor_out_.initialize(nn::InitScheme::glorot_uniform, rng);
        location_block_.dense.initialize(nn::InitScheme::he_uniform, rng);
        location_out_.initialize(nn::InitScheme::glorot_uniform, rng);
    }

    [[nodiscard]] const HMlpConfig& config() const { return cfg_; }

    HeadOutputs<T> forward(const Tensor2<T>& x, nn::Mode mode, Rng& rng) {
        if (x.cols() != static_cast<Eigen::Index>(cfg_.input_dim)) {
            throw ShapeError("network expects " + std::to_string(cfg_.input_dim) + " features, got " +
                             std::to_string(x.cols()));
        }
        Tensor2<T> h = x;
        for (auto& b : trunk_) {
            h = b.forward(h, mode, rng);
        }
        HeadOutputs<T> out;
        out.building_logits = building_out_.forward(h);
        out.building_probs = nn::softmax(out.building_logits);
        out.floor_logits =
            floor_out_.forward(floor_block_.forward(join(h, out.building_logits, out.building_probs), mode, rng));
        out.floor_probs = nn::softmax(out.floor_logits);
        out.location = location_out_.forward(
            location_block_.forward(join(h, out.floor_logits, out.floor_probs), mode, rng));
        trunk_rows_ = h.rows();
        cached_probs_b_ = out.building_probs;
        cached_probs_f_ = out.floor_probs;
        return out;
    }

    /// Reverse pass for the most recent forward; parameter gradients are left
    /// in the layers (see visit()). Gradients of the floor and location
    /// losses flow back into the upstream heads through the wiring.
    void backward(const HeadGrads<T>& g) {
        if (trunk_rows_ < 0 || g.location.rows() != trunk_rows_) {
            throw NumericError("stale cache: network backward without a matching forward pass");
        }
        const auto tw = static_cast<Eigen::Index>(cfg_.trunk_width());
        const auto rows = trunk_rows_;
        Tensor2<T> dh = Tensor2<T>::Zero(rows, tw);

        Tensor2<T> d_loc_in = location_block_.backward(location_out_.backward(g.location));
        dh += d_loc_in.leftCols(tw);
        Tensor2<T> d_floor_logits = g.floor_logits;
        if (cfg_.wiring != Wiring::none) {
            d_floor_logits += unwire(d_loc_in.rightCols(d_loc_in.cols() - tw), cached_probs_f_);
        }

        Tensor2<T> d_floor_in = floor_block_.backward(floor_out_.backward(d_floor_logits));
        dh += d_floor_in.leftCols(tw);
        Tensor2<T> d_building_logits = g.building_logits;
        if (cfg_.wiring != Wiring::none) {
            d_building_logits += unwire(d_floor_in.rightCols(d_floor_in.cols() - tw), cached_probs_b_);
        }

        dh += building_out_.backward(d_building_logits);
        for (auto it = trunk_.rbegin(); it != trunk_.rend(); ++it) {
            dh = it->backward(dh);
        }
        trunk_rows_ = -1;
    }

    /// Eval-mode inference that leaves all layer state untouched.
    [[nodiscard]] HeadOutputs<T> infer(const Tensor2<T>& x) const {
        if (x.cols() != static_cast<Eigen::Index>(cfg_.input_dim)) {
            throw ShapeError("network expects " + std::to_string(cfg_.input_dim) + " features, got " +
                             std::to_string(x.cols()));
        }
        Tensor2<T> h = x;
        for (const auto& b : trunk_) {
            h = infer_block(b, h);
        }
        HeadOutputs<T> out;
        out.building_logits = nn::dense_forward(h, building_out_.params);
        out.building_probs = nn::softmax(out.building_logits);
        out.floor_logits = nn::dense_forward(
            infer_block(floor_block_, join(h, out.building_logits, out.building_probs)), floor_out_.params);
        out.floor_probs = nn::softmax(out.floor_logits);
        out.location = nn::dense_forward(infer_block(location_block_, join(h, out.floor_logits, out.floor_probs)),
                                         location_out_.params);
        return out;
    }

    /// Visits every tensor in a fixed order: (name, value, grad or nullptr).
    void visit(const nn::TensorVisitor<T>& f) {
        for (std::size_t i = 0; i < trunk_.size(); ++i) {
            trunk_[i].visit("trunk" + std::to_string(i), f);
        }
        building_out_.visit("building.out", f);
        floor_block_.visit("floor.hidden", f);
        floor_out_.visit("floor.out", f);
        location_block_.visit("location.hidden", f);
        location_out_.visit("location.out", f);
    }

    [[nodiscard]] std::size_t trainable_count() const {
        std::size_t n = 0;
        for (const auto& b : trunk_) {
            n += b.trainable_count();
        }
        return n + building_out_.trainable_count() + floor_block_.trainable_count() + floor_out_.trainable_count() +
               location_block_.trainable_count() + location_out_.trainable_count();
    }

    /// Trunk-only trainable parameter count.
    [[nodiscard]] std::size_t trunk_trainable_count() const {
        std::size_t n = 0;
        for (const auto& b : trunk_) {
            n += b.trainable_count();
        }
        return n;
    }

    [[nodiscard]] ModelParams<T> snapshot() const {
        ModelParams<T> p;
        const_cast<HMlp*>(this)->visit([&](const std::string& name, Tensor2<T>& value, Tensor2<T>* grad) {
            p.names.push_back(name);
            p.tensors.push_back(value);
            p.trainable.push_back(grad != nullptr);
        });
        return p;
    }

    void load(const ModelParams<T>& p) {
        std::size_t i = 0;
        visit([&](const std::string& name, Tensor2<T>& value, Tensor2<T>*) {
            if (i >= p.size() || p.names[i] != name || p.tensors[i].rows() != value.rows() ||
                p.tensors[i].cols() != value.cols()) {
                throw ShapeError("parameter snapshot does not match network layout at " + name);
            }
            value = p.tensors[i];
            ++i;
        });
        if (i != p.size()) {
            throw ShapeError("parameter snapshot has extra tensors");
        }
    }

    /// ReLU masks of every hidden block from the last forward pass.
    [[nodiscard]] std::vector<Tensor2<T>> relu_masks() const {
        std::vector<Tensor2<T>> out;
        for (const auto& b : trunk_) {
            out.push_back(b.relu_mask());
        }
        out.push_back(floor_block_.relu_mask());
        out.push_back(location_block_.relu_mask());
        return out;
    }

    /// Trainable parameters and their gradient buffers, in traversal order.
    void trainable(std::vector<Tensor2<T>*>& params, std::vector<const Tensor2<T>*>& grads) {
        params.clear();
        grads.clear();
        visit([&](const std::string&, Tensor2<T>& value, Tensor2<T>* grad) {
            if (grad) {
                params.push_back(&value);
                grads.push_back(grad);
            }
        });
    }

private:
    Tensor2<T> join(const Tensor2<T>& trunk, const Tensor2<T>& logits, const Tensor2<T>& probs) const {
        if (cfg_.wiring == Wiring::none) {
            return trunk;
        }
        const Tensor2<T>& signal = cfg_.wiring == Wiring::concat_probs ? probs : logits;
        Tensor2<T> out(trunk.rows(), trunk.cols() + signal.cols());
        out << trunk, signal;
        return out;
    }

    Tensor2<T> unwire(const Tensor2<T>& d_signal, const Tensor2<T>& probs) const {
        if (cfg_.wiring == Wiring::concat_probs) {
            return nn::softmax_backward(probs, d_signal);
        }
        return d_signal;
    }

    static Tensor2<T> infer_block(const nn::HiddenBlock<T>& b, const Tensor2<T>& x) {
        Tensor2<T> h = nn::dense_forward(x, b.dense.params);
        const auto& bn = b.norm.params;
        Tensor2<T> inv_std = (bn.running_var.array() + bn.epsilon).rsqrt().matrix();
        h = ((((h.rowwise() - bn.running_mean.row(0)).array().rowwise() * inv_std.row(0).array()).rowwise() *
              bn.gamma.row(0).array())
                 .rowwise() +
             bn.beta.row(0).array())
                .matrix();
        return h.cwiseMax(T(0));
    }

    HMlpConfig cfg_;
    std::vector<nn::HiddenBlock<T>> trunk_;
    nn::DenseLayer<T> building_out_;
    nn::HiddenBlock<T> floor_block_;
    nn::DenseLayer<T> floor_out_;
    nn::HiddenBlock<T> location_block_;
    nn::DenseLayer<T> location_out_;
    Eigen::Index trunk_rows_ = -1;
    Tensor2<T> cached_probs_b_;
    Tensor2<T> cached_probs_f_;
};

using Network = HMlp<float>;

/// Builds and initializes a network; weights depend only on (cfg, seed).
template <typename T = float>
HMlp<T> build_model(const HMlpConfig& cfg, std::uint64_t seed) {
    HMlp<T> net(cfg);
    Rng rng(init_seed(seed));
    net.initialize(rng);
    return net;
}

// ---------------------------------------------------------------------------
// Multitask loss
// ---------------------------------------------------------------------------

struct MultitaskLoss {
    double total = 0.0;
    double building = 0.0;
    double floor = 0.0;
    double location = 0.0;
};

/// (sum_u alpha_u L_u) / (sum_u alpha_u)
[[nodiscard]] inline double combine_losses(const LossWeights& w, double building, double floor, double location) {
    if (!(w.building > 0.0 && w.floor > 0.0 && w.location > 0.0)) {
        throw ConfigError("loss weights must be positive");
    }
    return (w.building * building + w.floor * floor + w.location * location) / w.sum();
}

template <typename T>
struct Batch {
    Tensor2<T> features;
    std::vector<int> buildings;
    std::vector<int> floors;
    Tensor2<T> location;  // normalized targets

    [[nodiscard]] Eigen::Index size() const { return features.rows(); }
};

template <typename T>
Batch<T> make_batch(const ProcessedSet& set, std::span<const std::size_t> indices) {
    Batch<T> b;
    const auto n = static_cast<Eigen::Index>(indices.size());
    b.features.resize(n, set.features.cols());
    b.location.resize(n, 2);
    b.buildings.reserve(indices.size());
    b.floors.reserve(indices.size());
    for (Eigen::Index i = 0; i < n; ++i) {
        const std::size_t src = indices[static_cast<std::size_t>(i)];
        b.features.row(i) = set.features.row(static_cast<Eigen::Index>(src)).template cast<T>();
        const auto& l = set.labels[src];
        b.buildings.push_back(l.building);
        b.floors.push_back(l.floor);
        b.location(i, 0) = static_cast<T>(l.x);
        b.location(i, 1) = static_cast<T>(l.y);
    }
    return b;
}

/// Per-head and combined loss of `out` against `batch`; fills `grads` (the
/// gradient of the combined loss w.r.t. each head output) when given.
template <typename T>
MultitaskLoss multitask_loss(const HeadOutputs<T>& out, const Batch<T>& batch, const LossWeights& w,
                             HeadGrads<T>* grads = nullptr) {
    auto lb = nn::softmax_xent(out.building_logits, std::span<const int>(batch.buildings));
    auto lf = nn::softmax_xent(out.floor_logits, std::span<const int>(batch.floors));
    auto ll = nn::mse_loss(out.location, batch.location);
    MultitaskLoss r{combine_losses(w, lb.loss, lf.loss, ll.loss), lb.loss, lf.loss, ll.loss};
    if (grads) {
        const double s = w.sum();
        grads->building_logits = lb.grad * static_cast<T>(w.building / s);
        grads->floor_logits = lf.grad * static_cast<T>(w.floor / s);
        grads->location = ll.grad * static_cast<T>(w.location / s);
    }
    return r;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainConfig {
    std::size_t epochs = 1000;
    std::size_t batch_size = 64;
    nn::AdamConfig adam;  // lr lives here for both optimizers
    nn::OptimizerKind optimizer = nn::OptimizerKind::adam;
    std::uint64_t seed = 1;

    void validate() const {
        if (batch_size < 2) {
            throw ConfigError("batch size must be at least 2 (batch normalization)");
        }
        if (!(adam.lr >= 0.0)) {
            throw ConfigError("learning rate must be non-negative");
        }
    }
};

struct EpochStats {
    std::size_t epoch = 0;  // 1-based
    MultitaskLoss loss;
};

/// Mini-batch boundaries over `count` shuffled positions; a trailing batch of
/// one record is merged into its predecessor (batch-norm needs >= 2 rows).
inline std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t count, std::size_t batch_size) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t start = 0; start < count; start += batch_size) {
        out.emplace_back(start, std::min(count, start + batch_size));
    }
    if (out.size() > 1 && out.back().second - out.back().first < 2) {
        out[out.size() - 2].second = out.back().second;
        out.pop_back();
    }
    return out;
}

/// Runs `cfg.epochs` epochs over the records `indices` of `set`, drawing
/// shuffles and dropout masks from `rng`. The optimizer starts fresh.
template <typename T>
std::vector<EpochStats> train_epochs(HMlp<T>& net, const ProcessedSet& set, std::span<const std::size_t> indices,
                                     const TrainConfig& cfg, Rng& rng) {
    cfg.validate();
    if (indices.size() < 2) {
        throw DataError("training needs at least 2 records");
    }
    nn::Optimizer<T> opt(cfg.optimizer, cfg.adam);
    std::vector<Tensor2<T>*> params;
    std::vector<const Tensor2<T>*> grads;
    net.trainable(params, grads);

    std::vector<std::size_t> order(indices.begin(), indices.end());
    std::vector<EpochStats> history;
    history.reserve(cfg.epochs);
    const auto& weights = net.config().weights;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        rng.shuffle(order.begin(), order.end());
        MultitaskLoss sum;
        std::size_t seen = 0;
        std::size_t batch_no = 0;
        for (auto [lo, hi] : batch_ranges(order.size(), cfg.batch_size)) {
            ++batch_no;
            auto batch = make_batch<T>(set, std::span<const std::size_t>(order.data() + lo, hi - lo));
            auto out = net.forward(batch.features, nn::Mode::train, rng);
            HeadGrads<T> g;
            const auto loss = multitask_loss(out, batch, weights, &g);
            if (!std::isfinite(loss.total)) {
                throw NumericError("training diverged (non-finite loss) at epoch " + std::to_string(epoch) +
                                   ", batch " + std::to_string(batch_no));
            }
            net.backward(g);
            opt.step(params, grads);
            const auto bs = static_cast<double>(hi - lo);
            sum.total += loss.total * bs;
            sum.building += loss.building * bs;
            sum.floor += loss.floor * bs;
            sum.location += loss.location * bs;
            seen += hi - lo;
        }
        const auto n = static_cast<double>(seen);
        history.push_back({epoch, {sum.total / n, sum.building / n, sum.floor / n, sum.location / n}});
    }
    return history;
}

template <typename T = float>
struct CentralResult {
    HMlp<T> network;
    std::vector<EpochStats> history;
};

/// Central training: weights from build_model(model_cfg, cfg.seed), batches
/// and dropout from stream (cfg.seed, client 0, round 0).
template <typename T = float>
CentralResult<T> train_central(const ProcessedSet& train, const TrainConfig& cfg, const HMlpConfig& model_cfg) {
    if (train.size() == 0) {
        throw DataError("training set is empty");
    }
    CentralResult<T> r{build_model<T>(model_cfg, cfg.seed), {}};
    std::vector<std::size_t> all(train.size());
    for (std::size_t i = 0; i < all.size(); ++i) {
        all[i] = i;
    }
    Rng rng(stream_seed(cfg.seed, 0, 0));
    r.history = train_epochs(r.network, train, all, cfg, rng);
    return r;
}

// ---------------------------------------------------------------------------
// Prediction and evaluation
// ---------------------------------------------------------------------------

struct PositionEstimate {
    int building = 0;
    int floor = 0;
    double x = 0.0;  // meters
    double y = 0.0;
    std::vector<double> building_probs;
    std::vector<double> floor_probs;

    [[nodiscard]] Position position() const { return {building, floor, x, y}; }
};

namespace detail {

template <typename T>
int argmax_first(const Tensor2<T>& probs, Eigen::Index row) {
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < probs.cols(); ++k) {
        if (probs(row, k) > probs(row, best)) {
            best = k;
        }
    }
    return static_cast<int>(best);
}

inline constexpr Eigen::Index kInferenceChunk = 2048;

}  // namespace detail

/// Eval-mode prediction; argmax ties go to the lowest class index and
/// locations are mapped back to meters with `bounds`.
template <typename T>
std::vector<PositionEstimate> predict(const HMlp<T>& net, const Tensor2<float>& features, const CoordBounds& bounds) {
    std::vector<PositionEstimate> out;
    out.reserve(static_cast<std::size_t>(features.rows()));
    for (Eigen::Index start = 0; start < features.rows(); start += detail::kInferenceChunk) {
        const Eigen::Index len = std::min(detail::kInferenceChunk, features.rows() - start);
        const Tensor2<T> x = features.middleRows(start, len).template cast<T>();
        const auto heads = net.infer(x);
        for (Eigen::Index i = 0; i < len; ++i) {
            PositionEstimate e;
            e.building = detail::argmax_first(heads.building_probs, i);
            e.floor = detail::argmax_first(heads.floor_probs, i);
            e.x = bounds.denormalize_x(static_cast<double>(heads.location(i, 0)));
            e.y = bounds.denormalize_y(static_cast<double>(heads.location(i, 1)));
            e.building_probs.resize(static_cast<std::size_t>(heads.building_probs.cols()));
            e.floor_probs.resize(static_cast<std::size_t>(heads.floor_probs.cols()));
            for (Eigen::Index k = 0; k < heads.building_probs.cols(); ++k) {
                e.building_probs[static_cast<std::size_t>(k)] = static_cast<double>(heads.building_probs(i, k));
            }
            for (Eigen::Index k = 0; k < heads.floor_probs.cols(); ++k) {
                e.floor_probs[static_cast<std::size_t>(k)] = static_cast<double>(heads.floor_probs(i, k));
            }
            out.push_back(std::move(e));
        }
    }
    return out;
}

template <typename T>
std::vector<PositionEstimate> predict(const HMlp<T>& net, const ProcessedSet& set) {
    return predict(net, set.features, set.norm_bounds);
}

/// Ground-truth positions of a processed set, in meters.
inline std::vector<Position> true_positions(const ProcessedSet& set) {
    std::vector<Position> out;
    out.reserve(set.size());
    for (const auto& l : set.labels) {
        out.push_back({l.building, l.floor, set.norm_bounds.denormalize_x(l.x), set.norm_bounds.denormalize_y(l.y)});
    }
    return out;
}

inline std::vector<Position> positions_of(const std::vector<PositionEstimate>& estimates) {
    std::vector<Position> out;
    out.reserve(estimates.size());
    for (const auto& e : estimates) {
        out.push_back(e.position());
    }
    return out;
}

struct Evaluation {
    LocalizationMetrics metrics;
    MultitaskLoss loss;  // eval-mode loss on normalized targets
};

template <typename T>
Evaluation evaluate_detailed(const HMlp<T>& net, const ProcessedSet& set) {
    if (set.size() == 0) {
        throw DataError("evaluation set is empty");
    }
    Evaluation ev;
    std::vector<Position> predicted;
    predicted.reserve(set.size());
    MultitaskLoss sum;
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < set.size(); start += detail::kInferenceChunk) {
        const std::size_t len = std::min<std::size_t>(detail::kInferenceChunk, set.size() - start);
        idx.resize(len);
        for (std::size_t i = 0; i < len; ++i) {
            idx[i] = start + i;
        }
        const auto batch = make_batch<T>(set, idx);
        const auto heads = net.infer(batch.features);
        const auto l = multitask_loss(heads, batch, net.config().weights);
        const auto w = static_cast<double>(len);
        sum.total += l.total * w;
        sum.building += l.building * w;
        sum.floor += l.floor * w;
        sum.location += l.location * w;
        for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(len); ++i) {
            predicted.push_back({detail::argmax_first(heads.building_probs, i),
                                 detail::argmax_first(heads.floor_probs, i),
                                 set.norm_bounds.denormalize_x(static_cast<double>(heads.location(i, 0))),
                                 set.norm_bounds.denormalize_y(static_cast<double>(heads.location(i, 1)))});
        }
    }
    const auto n = static_cast<double>(set.size());
    ev.loss = {sum.total / n, sum.building / n, sum.floor / n, sum.location / n};
    const auto truth = true_positions(set);
    ev.metrics = compute_metrics(predicted, truth);
    return ev;
}

template <typename T>
LocalizationMetrics evaluate(const HMlp<T>& net, const ProcessedSet& set) {
    return evaluate_detailed(net, set).metrics;
}

}  // namespace fedloc
