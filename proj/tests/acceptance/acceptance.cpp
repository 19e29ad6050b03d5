// Acceptance checks, one criterion per invocation:
//
//   acceptance <1..8>
//
// Prints one "[PASS]" / "[FAIL]" / "[SKIP]" line for the criterion, preceded
// by indented detail lines. Exit status: 0 pass, 1 fail, 77 skipped.
// Criteria 1-6 need the public survey CSVs under FEDLOC_DATA_DIR; 7 and 8
// always run. Trained networks are cached under FEDLOC_ACCEPTANCE_CACHE
// (default: <build>/acceptance_cache) so criteria sharing a model train once.

#include "fedloc/channel.hpp"
#include "fedloc/checkpoint.hpp"
#include "fedloc/config.hpp"
#include "fedloc/dataset.hpp"
#include "fedloc/fed.hpp"
#include "fedloc/hierbase.hpp"
#include "fedloc/hmodel.hpp"
#include "fedloc/metrics.hpp"
#include "fedloc/runner.hpp"

#include "../unit/gradcheck.hpp"
#include "../unit/support.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace {

using namespace fedloc;
namespace fs = std::filesystem;

constexpr int kSkip = 77;

struct Outcome {
    enum class Status { pass, fail, skip } status = Status::fail;
    std::string summary;
};

Outcome pass(std::string s) { return {Outcome::Status::pass, std::move(s)}; }
Outcome fail(std::string s) { return {Outcome::Status::fail, std::move(s)}; }
Outcome skip(std::string s) { return {Outcome::Status::skip, std::move(s)}; }
Outcome verdict(bool ok, std::string s) { return ok ? pass(std::move(s)) : fail(std::move(s)); }

void detail(const std::string& line) { std::cout << "      " << line << "\n" << std::flush; }

std::string fmt(double v, int precision = 4) {
    std::ostringstream o;
    o.precision(precision);
    o << v;
    return o.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// Dataset-backed helpers
// ---------------------------------------------------------------------------

std::optional<fs::path> canonical_data_dir() {
    const char* env = std::getenv("FEDLOC_DATA_DIR");
    if (!env || !*env) {
        return std::nullopt;
    }
    const fs::path dir = env;
    if (!fs::exists(dir / "trainingData.csv")) {
        return std::nullopt;
    }
    return dir;
}

const char* kNoData = "canonical dataset not found (set FEDLOC_DATA_DIR to the directory with trainingData.csv)";

RunConfig preset_config(const std::string& preset, const fs::path& data, std::uint64_t seed) {
    json over = {{"data", {{"dir", data.string()}}}, {"seed", seed}};
    return resolve_config(load_preset(preset), over);
}

fs::path cache_root() {
    if (const char* env = std::getenv("FEDLOC_ACCEPTANCE_CACHE"); env && *env) {
        return env;
    }
    return FEDLOC_ACCEPTANCE_CACHE_DIR;
}

struct TrainedModel {
    Network network;
    double train_seconds = 0.0;
};

/// Central training with an on-disk cache keyed by the resolved config and
/// the training file's hash.
TrainedModel central_model(const RunConfig& cfg, const run::PreparedData& d) {
    const std::string key = hex64(fnv1a(to_json(cfg).dump() + "|central|" + d.train_hash));
    const fs::path dir = cache_root() / key;
    if (fs::exists(dir / "manifest.txt")) {
        auto cp = load_checkpoint(dir);
        return {std::move(cp.network), std::stod(cp.manifest.get("meta.train_seconds"))};
    }
    const auto t0 = std::chrono::steady_clock::now();
    auto r = train_central<float>(d.train, cfg.central_train_config(), cfg.model_for(d.train));
    const double secs = seconds_since(t0);
    io::Manifest meta;
    meta.set("meta.train_seconds", io::format_double(secs));
    save_checkpoint(r.network, dir, meta);
    return {std::move(r.network), secs};
}

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size()); }

// ---------------------------------------------------------------------------
// AC1 - preprocessing fidelity
// ---------------------------------------------------------------------------

Outcome ac1() {
    const auto data = canonical_data_dir();
    if (!data) {
        return skip(kNoData);
    }
    const auto cfg = preset_config("table1", *data, 1);
    const auto t0 = std::chrono::steady_clock::now();
    const auto d = run::prepare_data(cfg);
    const double secs = seconds_since(t0);
    const auto& s = d.selection;
    detail("stage1=" + std::to_string(s.after_all_missing) + " stage2=" + std::to_string(s.after_visibility) +
           " min_rssi=" + fmt(d.fitted.min_rssi) + " runtime=" + fmt(secs) + "s");
    const bool ok = s.after_all_missing == 465 && s.after_visibility == 248 && d.fitted.min_rssi == -105.0 &&
                    secs < 10.0;
    return verdict(ok, "stage1=465, stage2=248, min_rssi=-105, runtime < 10 s");
}

// ---------------------------------------------------------------------------
// AC2 - central H-MLP accuracy, AC4 - validation generalization
// ---------------------------------------------------------------------------

struct CentralSeedResult {
    LocalizationMetrics test;
    std::optional<LocalizationMetrics> validation;
    double train_seconds = 0.0;
};

std::vector<CentralSeedResult> central_runs(const fs::path& data, const std::string& wiring, std::size_t epochs) {
    std::vector<CentralSeedResult> out;
    for (std::uint64_t seed : {1, 2, 3}) {
        auto cfg = preset_config("table1", data, seed);
        cfg.model.wiring = parse_wiring(wiring);
        cfg.train.epochs = epochs;
        const auto d = run::prepare_data(cfg);
        const auto model = central_model(cfg, d);
        CentralSeedResult r;
        r.test = evaluate(model.network, d.test);
        if (d.validation) {
            r.validation = evaluate(model.network, *d.validation);
        }
        r.train_seconds = model.train_seconds;
        detail(wiring + " seed " + std::to_string(seed) + " epochs " + std::to_string(epochs) +
               ": B-ACC=" + fmt(r.test.b_acc) + " F-ACC=" + fmt(r.test.f_acc) +
               " 2D-MDE(correct)=" + fmt(r.test.mde2d_correct) + " 3D-MDE=" + fmt(r.test.mde3d) +
               " train=" + fmt(r.train_seconds) + "s");
        out.push_back(r);
    }
    return out;
}

Outcome ac2() {
    const auto data = canonical_data_dir();
    if (!data) {
        return skip(kNoData);
    }
    const auto smoke = central_runs(*data, "concat-probs", 100);
    std::vector<double> smoke_mde;
    double smoke_secs = 0.0;
    for (const auto& r : smoke) {
        smoke_mde.push_back(r.test.mde3d);
        smoke_secs = std::max(smoke_secs, r.train_seconds);
    }
    const bool smoke_ok = mean(smoke_mde) <= 12.0 && smoke_secs <= 300.0;
    detail(std::string(smoke_ok ? "smoke ok" : "smoke FAILED") + ": 100 epochs mean 3D-MDE=" +
           fmt(mean(smoke_mde)) + " m (<= 12), slowest run " + fmt(smoke_secs) + " s (<= 300)");

    const auto full = central_runs(*data, "concat-probs", 1000);
    std::vector<double> b;
    std::vector<double> f;
    std::vector<double> m3;
    double slowest = 0.0;
    for (const auto& r : full) {
        b.push_back(r.test.b_acc);
        f.push_back(r.test.f_acc);
        m3.push_back(r.test.mde3d);
        slowest = std::max(slowest, r.train_seconds);
    }
    const bool ok = smoke_ok && mean(b) >= 0.99 && mean(f) >= 0.98 && mean(m3) <= 7.5 && slowest <= 1800.0;
    return verdict(ok, "1000 epochs, 3 seeds: B-ACC=" + fmt(mean(b)) + " (>= 0.99) F-ACC=" + fmt(mean(f)) +
                           " (>= 0.98) 3D-MDE=" + fmt(mean(m3)) + " m (<= 7.5), slowest " + fmt(slowest) +
                           " s (<= 1800)");
}

Outcome ac4() {
    const auto data = canonical_data_dir();
    if (!data) {
        return skip(kNoData);
    }
    if (!fs::exists(*data / "validationData.csv")) {
        return skip("validationData.csv not found next to trainingData.csv");
    }
    const auto runs = central_runs(*data, "concat-probs", 1000);
    std::vector<double> b;
    std::vector<double> f;
    std::vector<double> correct;
    std::vector<double> eq6;
    std::size_t n = 0;
    for (const auto& r : runs) {
        b.push_back(r.validation->b_acc);
        f.push_back(r.validation->f_acc);
        correct.push_back(r.validation->mde2d_correct);
        eq6.push_back(r.validation->mde2d_eq6);
        n = r.validation->n;
    }
    const double best_mde = std::min(mean(correct), mean(eq6));
    const bool ok = n == 1111 && mean(b) >= 0.99 && mean(f) >= 0.91 && best_mde <= 11.0;
    return verdict(ok, "validation (" + std::to_string(n) + " records): B-ACC=" + fmt(mean(b)) +
                           " (>= 0.99) F-ACC=" + fmt(mean(f)) + " (>= 0.91) 2D-MDE correct-subset=" +
                           fmt(mean(correct)) + " eq6-as-printed=" + fmt(mean(eq6)) + " (either <= 11.0)");
}

// ---------------------------------------------------------------------------
// AC3 - hierarchy benefit
// ---------------------------------------------------------------------------

Outcome ac3() {
    const auto data = canonical_data_dir();
    if (!data) {
        return skip(kNoData);
    }
    std::vector<double> hier;
    std::vector<double> flat;
    for (const auto& r : central_runs(*data, "concat-probs", 1000)) {
        hier.push_back(r.test.mde2d_correct);
    }
    for (const auto& r : central_runs(*data, "flat", 1000)) {
        flat.push_back(r.test.mde2d_correct);
    }
    const double gain = 100.0 * (mean(flat) - mean(hier)) / mean(flat);
    return verdict(gain >= 10.0, "2D-MDE (correct-subset) H-MLP " + fmt(mean(hier)) + " m vs flat " +
                                     fmt(mean(flat)) + " m: " + fmt(gain) + "% lower (>= 10%)");
}

// ---------------------------------------------------------------------------
// AC5 - FL vs central
// ---------------------------------------------------------------------------

Outcome ac5() {
    const auto data = canonical_data_dir();
    if (!data) {
        return skip(kNoData);
    }
    auto cfg = preset_config("table4", *data, 1);
    cfg.federation.patience = 0;  // full R rounds: matched budget R * E = 1000 epochs
    const auto d = run::prepare_data(cfg);
    const auto t0 = std::chrono::steady_clock::now();
    const auto partition = partition_clients(d.train, cfg.federation.clients, cfg.federation.partition, cfg.seed);
    const auto fl = fed::run_federation(d.train, partition, cfg.fed_config(cfg.federation.clients),
                                        cfg.model_for(d.train), &d.test, cfg.channel,
                                        [](const fed::RoundReport& r) {
                                            if (r.round == 1 || r.round % 10 == 0) {
                                                detail("round " + std::to_string(r.round) + " eval_loss=" +
                                                       fmt(r.eval->loss.total) +
                                                       " 2D-MDE=" + fmt(r.eval->metrics.mde2d_correct));
                                            }
                                        });
    detail("federation took " + fmt(seconds_since(t0)) + " s");
    const auto fl_metrics = evaluate(fl.network, d.test);

    auto central_cfg = preset_config("table1", *data, 1);
    central_cfg.train.epochs = cfg.federation.rounds * cfg.federation.local_epochs;
    const auto central = central_model(central_cfg, d);
    const auto central_metrics = evaluate(central.network, d.test);

    const double ratio = fl_metrics.mde2d_correct / central_metrics.mde2d_correct;
    const double loss1 = fl.reports.at(0).eval->loss.total;
    const double loss20 = fl.reports.at(19).eval->loss.total;
    const bool ok = ratio <= 1.25 && loss20 <= 0.6 * loss1;
    return verdict(ok, "FL 2D-MDE " + fmt(fl_metrics.mde2d_correct) + " m vs central " +
                           fmt(central_metrics.mde2d_correct) + " m (ratio " + fmt(ratio) +
                           " <= 1.25); eval loss round 20 / round 1 = " + fmt(loss20 / loss1) + " (<= 0.6)");
}

// ---------------------------------------------------------------------------
// AC6 - scalability trend
// ---------------------------------------------------------------------------

std::vector<double> average_ranks(const std::vector<double>& v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) {
            ++j;
        }
        const double r = 0.5 * double(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) {
            ranks[order[k]] = r;
        }
        i = j + 1;
    }
    return ranks;
}

/// Pearson correlation of average ranks; 0 when either side is constant.
double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    const auto rx = average_ranks(x);
    const auto ry = average_ranks(y);
    const double mx = mean(rx);
    const double my = mean(ry);
    double sxy = 0.0;
    double sxx = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    return sxx > 0.0 && syy > 0.0 ? sxy / std::sqrt(sxx * syy) : 0.0;
}

Outcome ac6() {
    const auto data = canonical_data_dir();
    if (!data) {
        return skip(kNoData);
    }
    std::vector<double> cs;
    std::vector<double> accs;
    for (std::uint64_t seed : {1, 2, 3}) {
        const auto cfg = preset_config("scalability", *data, seed);
        const auto d = run::prepare_data(cfg);
        const auto& sweep = cfg.federation.sweep_clients;
        const std::size_t per_client = d.train.size() / *std::max_element(sweep.begin(), sweep.end());
        for (std::size_t c : sweep) {
            auto sub = cfg;
            sub.federation.patience = 0;
            const auto partition = partition_fixed_size(d.train.size(), c, per_client, seed);
            const auto res =
                fed::run_federation(d.train, partition, sub.fed_config(c), sub.model_for(d.train), nullptr, sub.channel);
            const double acc = evaluate(res.network, d.test).acc;
            detail("seed " + std::to_string(seed) + " C=" + std::to_string(c) + " records=" +
                   std::to_string(c * per_client) + " ACC=" + fmt(acc));
            cs.push_back(double(c));
            accs.push_back(acc);
        }
    }
    const double rho = spearman(cs, accs);
    return verdict(rho >= 0.0, "Spearman(C, ACC) over 3 seeds = " + fmt(rho) + " (>= 0)");
}

// ---------------------------------------------------------------------------
// AC7 - communication accounting
// ---------------------------------------------------------------------------

Outcome ac7() {
    bool ok = true;
    const RunConfig cfg = resolve_config(load_preset("table1"), nullptr);
    const auto w = build_model<float>(cfg.canonical_model(), 1).trainable_count();
    detail("configured network W=" + std::to_string(w));

    std::vector<std::size_t> counts(128);
    std::iota(counts.begin(), counts.end(), 1);
    const auto rows = channel::feasibility_report(cfg.channel, w, counts);
    for (const auto& r : rows) {
        if (r.total_uplink_bits != static_cast<std::uint64_t>(r.clients) * w * 32u) {
            ok = false;
            detail("uplink bits wrong at C=" + std::to_string(r.clients));
        }
        if (r.downlink_bits != rows.front().downlink_bits) {
            ok = false;
            detail("downlink varies at C=" + std::to_string(r.clients));
        }
    }
    for (std::size_t c = 2; c <= 128; ++c) {
        if (!(channel::uplink_bits_per_client(cfg.channel, 0, c, 0) <
              channel::uplink_bits_per_client(cfg.channel, 0, c - 1, 0))) {
            ok = false;
            detail("per-client uplink budget not decreasing at C=" + std::to_string(c));
        }
    }
    detail("C in [1,128]: total uplink == C*W*32, downlink constant, per-client budget strictly decreasing");

    // the federation loop reports the same load for its own network
    const auto train = fedloc::testing::synthetic_processed(4);
    RunConfig run_cfg;
    run_cfg.model.common_layers = {32, 16};
    run_cfg.model.floor_hidden = 16;
    run_cfg.model.location_hidden = 16;
    const auto model = run_cfg.model_for(train);
    for (std::size_t c : {1u, 3u, 6u}) {
        auto f = run_cfg.fed_config(c);
        f.rounds = 2;
        f.local_epochs = 1;
        f.batch_size = 16;
        f.patience = 0;
        const auto res = fed::run_federation(train, partition_clients(train, c, PartitionStrategy::iid_uniform, 1), f,
                                             model);
        const auto wn = res.network.trainable_count();
        for (const auto& r : res.reports) {
            if (r.uplink_bits_total != c * wn * 32u || r.downlink_bits != wn * 32u) {
                ok = false;
                detail("round report load wrong for C=" + std::to_string(c));
            }
        }
    }
    detail("federation round reports: uplink == C*W*32, downlink == W*32 for C in {1,3,6}");
    return verdict(ok, "uplink C*W*32 bit-exact (W=" + std::to_string(w) +
                           "), downlink constant in C, per-client uplink strictly decreasing over C in [1,128]");
}

// ---------------------------------------------------------------------------
// AC8 - property suites
// ---------------------------------------------------------------------------

bool check_gradients_suite() {
    double worst = 0.0;
    std::size_t kinks = 0;
    std::size_t coords = 0;
    int trials = 0;
    for (Wiring wiring : {Wiring::concat_probs, Wiring::concat_logits, Wiring::none}) {
        for (int t = 0; t < 7; ++t) {
            HMlpConfig c;
            c.input_dim = 5;
            c.common_layers = {6, 5};
            c.building_classes = 3;
            c.floor_classes = 4;
            c.floor_hidden = 4;
            c.location_hidden = 4;
            const double dropout = t % 2 ? 0.25 : 0.0;
            c.common_dropout = c.floor_dropout = c.location_dropout = dropout;
            c.wiring = wiring;
            auto net = build_model<double>(c, 700 + t);
            fedloc::testing::perturb_affine(net, 1700 + t);
            const auto data = fedloc::testing::random_processed(9, 5, 3, 4, 60 + t);
            std::vector<std::size_t> idx(data.size());
            std::iota(idx.begin(), idx.end(), 0);
            const auto rep = fedloc::testing::check_gradients(net, make_batch<double>(data, idx), 77 + t);
            worst = std::max(worst, rep.worst());
            kinks += rep.kinks;
            coords += rep.coordinates;
            ++trials;
        }
    }
    const bool ok = worst <= 1e-3 && kinks * 20 < coords;
    detail(std::string(ok ? "ok  " : "FAIL") + " gradients: " + std::to_string(trials) +
           " randomized nets, worst relative error " + fmt(worst, 3) + " (<= 1e-3), " + std::to_string(kinks) + "/" +
           std::to_string(coords) + " coordinates on ReLU kinks skipped");
    return ok;
}

bool check_fedavg_suite() {
    bool ok = true;
    for (int trial = 0; trial < 25; ++trial) {
        Rng rng(4000 + trial);
        const std::size_t clients = 1 + rng.below(7);
        std::vector<ModelParams<double>> ps(clients);
        std::vector<std::size_t> sizes;
        for (auto& p : ps) {
            p.names = {"w"};
            p.trainable = {true};
            Tensor2<double> t(3, 4);
            for (Eigen::Index i = 0; i < t.size(); ++i) {
                t.data()[i] = rng.uniform(-3.0, 3.0);
            }
            p.tensors = {t};
            sizes.push_back(1 + rng.below(1000));
        }
        const auto agg = fed::aggregate(ps, sizes);
        for (Eigen::Index i = 0; i < agg.tensors[0].size(); ++i) {
            double lo = std::numeric_limits<double>::infinity();
            double hi = -lo;
            for (const auto& p : ps) {
                lo = std::min(lo, p.tensors[0].data()[i]);
                hi = std::max(hi, p.tensors[0].data()[i]);
            }
            ok &= agg.tensors[0].data()[i] >= lo - 1e-12 && agg.tensors[0].data()[i] <= hi + 1e-12;
        }
        std::vector<fed::Contribution<double>> fwd;
        for (std::size_t c = 0; c < clients; ++c) {
            fwd.push_back({c, &ps[c], sizes[c]});
        }
        auto rev = fwd;
        std::reverse(rev.begin(), rev.end());
        ok &= fed::aggregate(std::span<const fed::Contribution<double>>(fwd)).tensors[0] ==
              fed::aggregate(std::span<const fed::Contribution<double>>(rev)).tensors[0];
        ok &= fed::aggregate<double>({ps[0]}, {sizes[0]}).tensors[0] == ps[0].tensors[0];
    }

    // C = 1, R = 1 is central training
    const auto data = fedloc::testing::synthetic_processed(5);
    RunConfig cfg;
    cfg.model.common_layers = {16, 8};
    cfg.model.floor_hidden = 8;
    cfg.model.location_hidden = 8;
    cfg.train.epochs = 3;
    cfg.train.batch_size = 32;
    cfg.federation.local_epochs = 3;
    cfg.federation.rounds = 1;
    cfg.seed = 5;
    const auto model = cfg.model_for(data);
    fedloc::Partition one;
    one.client_shards.emplace_back(data.size());
    std::iota(one.client_shards[0].begin(), one.client_shards[0].end(), 0);
    const auto fl = fed::run_federation(data, one, cfg.fed_config(1), model);
    const auto central = train_central<float>(data, cfg.central_train_config(), model);
    const bool same = checksum(fl.network.snapshot()) == checksum(central.network.snapshot());
    ok &= same;
    detail(std::string(ok ? "ok  " : "FAIL") +
           " FedAvg: convex bounds, permutation invariance, single-client identity on 25 random draws; C=1 "
           "checksum " +
           hex64(checksum(fl.network.snapshot())) + (same ? " == " : " != ") + "central " +
           hex64(checksum(central.network.snapshot())));
    return ok;
}

bool check_hierbase_suite() {
    // random toys leave some (building, floor) cells empty; those warnings are expected here
    const auto sink = std::exchange(warning_sink(), WarningSink{});
    bool ok = true;
    int toys = 0;
    for (int trial = 0; trial < 150; ++trial) {
        Rng rng(9000 + trial);
        const int nb = 2 + int(rng.below(3));
        const int nf = 1 + int(rng.below(4));
        const Eigen::Index width = 2 + Eigen::Index(rng.below(6));
        ProcessedSet s;
        const Eigen::Index rows = 24;
        s.features.resize(rows, width);
        for (Eigen::Index i = 0; i < rows; ++i) {
            for (Eigen::Index a = 0; a < width; ++a) {
                s.features(i, a) = float(rng.uniform());
            }
            const int b = i < nb ? int(i) : int(rng.below(std::uint64_t(nb)));
            s.labels.push_back({b, int(rng.below(std::uint64_t(nf))), rng.uniform(), rng.uniform()});
            s.user_ids.push_back(1);
        }
        s.building_count = nb;
        s.floor_count = nf;
        const auto profiles = hierbase::build_profiles(s);
        std::vector<double> q(static_cast<std::size_t>(width));
        for (auto& v : q) {
            v = rng.uniform();
        }
        auto mean_dist = [&](auto keep) {
            double sum = 0.0;
            int n = 0;
            for (Eigen::Index i = 0; i < rows; ++i) {
                if (!keep(s.labels[std::size_t(i)])) {
                    continue;
                }
                double acc = 0.0;
                for (Eigen::Index a = 0; a < width; ++a) {
                    const double d = q[std::size_t(a)] - double(s.features(i, a));
                    acc += d * d;
                }
                sum += std::sqrt(acc);
                ++n;
            }
            return n ? sum / n : std::numeric_limits<double>::infinity();
        };
        int best_b = 0;
        for (int b = 1; b < nb; ++b) {
            if (mean_dist([&](const PositionLabel& l) { return l.building == b; }) <
                mean_dist([&](const PositionLabel& l) { return l.building == best_b; })) {
                best_b = b;
            }
        }
        int best_f = -1;
        double best_fd = std::numeric_limits<double>::infinity();
        for (int f = 0; f < nf; ++f) {
            const double d = mean_dist([&](const PositionLabel& l) { return l.building == best_b && l.floor == f; });
            if (d < best_fd) {
                best_fd = d;
                best_f = f;
            }
        }
        const int got_b = hierbase::select_building(q, profiles);
        const auto bp = std::find_if(profiles.begin(), profiles.end(),
                                     [&](const hierbase::BuildingProfile& p) { return p.building == got_b; });
        const int got_f = hierbase::select_floor(q, *bp);
        // a different pick is only acceptable on an exact tie up to summation order
        auto near = [](double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(b)); };
        const bool b_ok = got_b == best_b ||
                          near(mean_dist([&](const PositionLabel& l) { return l.building == got_b; }),
                               mean_dist([&](const PositionLabel& l) { return l.building == best_b; }));
        const bool f_ok = got_b != best_b || got_f == best_f ||
                          near(mean_dist([&](const PositionLabel& l) { return l.building == best_b && l.floor == got_f; }),
                               best_fd);
        ok &= b_ok && f_ok;
        ++toys;
    }
    warning_sink() = sink;
    detail(std::string(ok ? "ok  " : "FAIL") + " hierbase: building/floor argmin == brute force on " +
           std::to_string(toys) + " random toys");
    return ok;
}

bool check_ridge_suite() {
    bool ok = true;
    double worst = 0.0;
    for (int trial = 0; trial < 30; ++trial) {
        Rng rng(500 + trial);
        const Eigen::Index n = 5 + Eigen::Index(rng.below(40));
        const Eigen::Index d = 1 + Eigen::Index(rng.below(12));
        hierbase::Matrix x(n, d);
        hierbase::Matrix l(n, 2);
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            x.data()[i] = rng.uniform(-1.0, 1.0);
        }
        for (Eigen::Index i = 0; i < l.size(); ++i) {
            l.data()[i] = rng.uniform(-1.0, 1.0);
        }
        const double lambda = 1e-2;
        const auto r = hierbase::fit_floor_regressor(x, l, lambda);
        const hierbase::Matrix xc = x.rowwise() - x.colwise().mean();
        const hierbase::Matrix lc = l.rowwise() - l.colwise().mean();
        const Eigen::MatrixXd grad = xc.transpose() * (xc * r.coefficients - lc) + lambda * r.coefficients;
        const double scale = xc.norm() * lc.norm() + lambda * r.coefficients.norm();
        const double rel = grad.norm() / scale;
        worst = std::max(worst, rel);
        ok &= rel <= 1e-6;
    }
    detail(std::string(ok ? "ok  " : "FAIL") + " ridge: stationarity residual / scale worst " + fmt(worst, 3) +
           " (<= 1e-6) over 30 random problems, including d > n");
    return ok;
}

bool check_metrics_suite() {
    bool ok = true;
    const std::vector<Position> truth{{0, 0, 0, 0}, {0, 1, 0, 0}, {1, 2, 0, 0}, {2, 3, 0, 0}};
    const std::vector<Position> pred{{0, 0, 0, 0}, {0, 2, 0, 0}, {1, 2, 0, 0}, {1, 0, 0, 0}};
    const auto a = accuracies(pred, truth);
    ok &= a.building == 0.75 && a.floor == 0.5 && a.joint == 0.5;
    const std::vector<Position> t2{{0, 0, 0, 0}, {0, 0, 0, 0}};
    const std::vector<Position> p2{{0, 1, 3, 0}, {0, 0, 0, 4}};
    ok &= mde2d(p2, t2, MdeVariant::eq6_as_printed) == 2.0;
    ok &= mde2d(p2, t2, MdeVariant::correct_subset) == 4.0;
    const std::vector<Position> t3{{0, 0, 0, 0}, {0, 0, 1, 1}};
    const std::vector<Position> p3{{1, 1, 3, 4}, {0, 0, 1, 1}};
    ok &= mde3d(p3, t3) == 2.5;
    const std::vector<Position> p4{{0, 0, 3, 0}, {0, 0, 0, 4}};
    ok &= mde2d(p4, t2, MdeVariant::eq6_as_printed) == 3.5 && mde2d(p4, t2, MdeVariant::correct_subset) == 3.5;
    detail(std::string(ok ? "ok  " : "FAIL") +
           " metrics: (0.75, 0.5, 0.5); 2D-MDE eq6 2.0 / correct-subset 4.0; all-correct 3.5; 3D-MDE 2.5");
    return ok;
}

bool check_powed_suite() {
    bool ok = true;
    for (double min_rssi : {-105.0, -110.0, -90.0}) {
        for (double beta : {std::exp(1.0), 1.0, 2.0}) {
            double prev = -1.0;
            for (double v = min_rssi; v <= 0.0; v += 0.5) {
                const double p = powed_value(v, min_rssi, beta);
                ok &= p >= 0.0 && p <= 1.0 && p >= prev;
                prev = p;
            }
            ok &= powed_value(min_rssi, min_rssi, beta) == 0.0 && powed_value(0.0, min_rssi, beta) == 1.0;
        }
    }
    // missing readings map to 0 through the pipeline
    const std::string csv = fedloc::testing::toy_csv({{{-50, 100}, 1, 1, 0, 0}, {{-70, -80}, 2, 2, 0, 0}});
    const auto set = powed_transform(parse_csv(csv), PreprocessConfig{});
    ok &= set.features(0, 1) == 0.0f;
    detail(std::string(ok ? "ok  " : "FAIL") +
           " powed transform: values in [0, 1], non-decreasing in RSSI, 0 at min_rssi and for missing, 1 at 0 dBm");
    return ok;
}

bool check_determinism_suite() {
    const auto data = fedloc::testing::synthetic_processed(4);
    RunConfig cfg;
    cfg.model.common_layers = {16, 8};
    cfg.model.floor_hidden = 8;
    cfg.model.location_hidden = 8;
    cfg.train.epochs = 3;
    cfg.train.batch_size = 16;
    cfg.seed = 8;
    const auto model = cfg.model_for(data);
    auto metrics_hash = [&](const Network& net) { return fnv1a(run::metrics_json(evaluate(net, data)).dump()); };
    const auto c1 = metrics_hash(train_central<float>(data, cfg.central_train_config(), model).network);
    const auto c2 = metrics_hash(train_central<float>(data, cfg.central_train_config(), model).network);
    auto f = cfg.fed_config(4);
    f.rounds = 2;
    f.local_epochs = 1;
    f.patience = 0;
    const auto part = partition_clients(data, 4, PartitionStrategy::iid_uniform, 8);
    f.workers = 4;
    const auto f1 = metrics_hash(fed::run_federation(data, part, f, model).network);
    f.workers = 1;
    const auto f2 = metrics_hash(fed::run_federation(data, part, f, model).network);
    const bool ok = c1 == c2 && f1 == f2;
    detail(std::string(ok ? "ok  " : "FAIL") + " determinism: central rerun metrics " + hex64(c1) + "/" + hex64(c2) +
           ", federated 4 vs 1 workers " + hex64(f1) + "/" + hex64(f2));
    return ok;
}

Outcome ac8() {
    bool ok = true;
    ok &= check_gradients_suite();
    ok &= check_fedavg_suite();
    ok &= check_hierbase_suite();
    ok &= check_ridge_suite();
    ok &= check_metrics_suite();
    ok &= check_powed_suite();
    ok &= check_determinism_suite();
    return verdict(ok, "all seven suites (gradients, FedAvg algebra, hierbase argmin, ridge stationarity, metrics "
                       "fixtures, powed transform, determinism)");
}

struct Criterion {
    int id;
    const char* title;
    std::function<Outcome()> check;
};

}  // namespace

int main(int argc, char** argv) {
    warning_sink() = [](std::string_view msg) { std::cout << "      warning: " << msg << "\n"; };
    const std::vector<Criterion> criteria{
        {1, "preprocessing fidelity", ac1},       {2, "central H-MLP accuracy", ac2},
        {3, "hierarchy benefit", ac3},            {4, "validation-set generalization", ac4},
        {5, "federated vs central", ac5},         {6, "scalability trend", ac6},
        {7, "communication accounting", ac7},     {8, "property suites", ac8},
    };
    if (argc != 2) {
        std::cerr << "usage: acceptance <1..8>\n";
        return 2;
    }
    const int id = std::atoi(argv[1]);
    const auto it = std::find_if(criteria.begin(), criteria.end(), [&](const Criterion& c) { return c.id == id; });
    if (it == criteria.end()) {
        std::cerr << "unknown criterion '" << argv[1] << "'\n";
        return 2;
    }
    Outcome o;
    try {
        o = it->check();
    } catch (const std::exception& e) {
        o = fail(std::string("error: ") + e.what());
    }
    const char* tag = o.status == Outcome::Status::pass ? "[PASS]" : o.status == Outcome::Status::skip ? "[SKIP]" : "[FAIL]";
    std::cout << tag << " AC" << it->id << " " << it->title << ": " << o.summary << "\n";
    switch (o.status) {
        case Outcome::Status::pass: return 0;
        case Outcome::Status::skip: return kSkip;
        case Outcome::Status::fail: return 1;
    }
    return 1;
}
