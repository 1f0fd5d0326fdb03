// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any
// failure. `--cli <path>` enables the command-line determinism check.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "../unit/oracles.hpp"

#include "smtm/exit_controller.hpp"
#include "smtm/fixtures.hpp"
#include "smtm/harness.hpp"
#include "smtm/pipeline.hpp"
#include "smtm/priming_memory.hpp"
#include "smtm/semantic.hpp"

using namespace smtm;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void report(int id, const std::string& name, bool ok, const std::string& detail) {
    std::cout << (ok ? "PASS" : "FAIL") << " criterion " << id << " " << name << ": " << detail << std::endl;
    if (!ok) ++failures;
}

struct Prepared {
    ModelGraph model;
    Scenario scenario;
    GlobalMemory warmed;
};

Prepared prepare(const ModelGraph& model, ScenarioOptions options) {
    Prepared p{model, make_scenario(options), {}};
    p.warmed = warm_up(p.model, p.scenario.warmup.frames, p.scenario.warmup.labels, options.num_classes);
    return p;
}

// 1. tau = inf reproduces full inference frame by frame.
void baseline_equivalence(const ModelGraph& model) {
    const auto t0 = Clock::now();
    ScenarioOptions opt;
    opt.frames = 1000;
    opt.seed = 101;
    const auto p = prepare(model, opt);
    EngineConfig cfg;
    cfg.tau = kNeverExit;
    const auto run = run_stream(cfg, p.model, p.warmed, p.scenario.stream);
    const auto base = baseline_run(p.model, p.scenario.stream, p.warmed);
    std::size_t mismatches = 0;
    for (std::size_t i = 0; i < run.frames.size(); ++i) {
        if (run.frames[i].predicted != base.frames[i].predicted) ++mismatches;
    }
    const double drop = base.metrics.top1_accuracy.value_or(0) - run.metrics.top1_accuracy.value_or(0);
    const double secs = seconds_since(t0);
    const bool ok = run.frames.size() == 1000 && mismatches == 0 && drop == 0.0 && run.metrics.exit_ratio == 0.0 &&
                    secs < 30.0;
    std::ostringstream d;
    d << "frames=" << run.frames.size() << " mismatches=" << mismatches << " accuracy_drop=" << drop
      << " exit_ratio=" << run.metrics.exit_ratio << " time=" << secs << "s (limit 30s)";
    report(1, "baseline equivalence at tau=inf", ok, d.str());
}

// 2. Library primitives against independent oracles.
void oracle_suite() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(2024);

    double conv_err = 0.0;
    std::uniform_int_distribution<std::size_t> small(1, 4);
    std::uniform_real_distribution<float> wdist(-1.0f, 1.0f);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t groups = small(rng) % 2 == 0 ? 2 : 1;
        const std::size_t cin = groups * small(rng);
        const std::size_t cout = groups * small(rng);
        const std::size_t k = 1 + 2 * (small(rng) % 2);
        const std::size_t stride = 1 + small(rng) % 2;
        const std::size_t pad = small(rng) % 2;
        const Shape shape{cin, 4 + small(rng), 4 + small(rng)};
        const auto spec = resolve_layer(conv2d(cout, k, stride, pad, groups), shape);
        const auto in = oracle::random_map(shape, rng);
        std::vector<float> w(spec.param_count);
        for (float& v : w) v = wdist(rng);
        const auto got = apply_layer(spec, in, w);
        const auto want = oracle::conv2d(in, cout, k, stride, pad, groups, w);
        if (got.size() != want.size()) {
            conv_err = INFINITY;
            break;
        }
        for (std::size_t i = 0; i < want.size(); ++i) conv_err = std::max(conv_err, std::abs(got.data()[i] - want[i]));
    }

    double gap_err = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const Shape s{1 + rng() % 16, 1 + rng() % 12, 1 + rng() % 12};
        const auto fm = oracle::random_map(s, rng, -5.0f, 5.0f);
        const auto got = encode_gap(fm);
        const auto want = oracle::channel_means(fm);
        for (std::size_t c = 0; c < want.size(); ++c) gap_err = std::max(gap_err, std::abs(got.values[c] - want[c]));
    }

    double cum_err = 0.0;
    std::size_t argmax_mismatch = 0;
    std::uniform_real_distribution<double> sim(-1.0, 1.0);
    for (int stream = 0; stream < 1000; ++stream) {
        const std::size_t n = 2 + rng() % 7;
        std::vector<ClassId> cands(n);
        for (std::size_t i = 0; i < n; ++i) cands[i] = static_cast<ClassId>(i);
        auto state = init_cumulative(cands);
        std::vector<double> direct(n, 0.0);
        for (int l = 1; l <= 20; ++l) {
            SimilarityRow row{static_cast<std::size_t>(l), {}};
            for (std::size_t i = 0; i < n; ++i) {
                const double v = sim(rng);
                row.entries.emplace_back(cands[i], v);
                direct[i] += v * std::ldexp(1.0, l - 1);
            }
            accumulate(state, row);
            for (std::size_t i = 0; i < n; ++i) {
                const double rebuilt = state.accumulators[i] * std::ldexp(1.0, l - 1);
                cum_err = std::max(cum_err, std::abs(rebuilt - direct[i]) / std::max(1.0, std::abs(direct[i])));
            }
            const auto a = std::max_element(direct.begin(), direct.end()) - direct.begin();
            const auto b = std::max_element(state.accumulators.begin(), state.accumulators.end()) -
                           state.accumulators.begin();
            if (a != b) ++argmax_mismatch;
        }
    }

    std::size_t k_mismatch = 0;
    std::size_t topk_mismatch = 0;
    std::uniform_real_distribution<double> score(0.0, 10.0);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t n = 1 + rng() % 100;
        std::vector<double> scores(n);
        for (auto& v : scores) v = (rng() % 3 == 0) ? 0.0 : std::floor(score(rng));
        const double cl = 0.5 + 0.49 * (trial % 10) / 9.0;
        const std::size_t kmin = std::min<std::size_t>(2, n);
        const std::size_t k = adaptive_cache_size(scores, cl, kmin, n);
        if (k != oracle::adaptive_k(scores, cl, kmin, n)) ++k_mismatch;
        GlobalMemory g(n, {1});
        for (ClassId c = 0; c < n; ++c) g.center(c, 1) = {c, 1, {1.0f}, 1};
        if (select_fast_memory(g, scores, k).classes != oracle::top_k(scores, k)) ++topk_mismatch;
    }

    const double secs = seconds_since(t0);
    const bool ok = conv_err <= 1e-5 && gap_err <= 1e-6 && cum_err <= 1e-6 && argmax_mismatch == 0 &&
                    k_mismatch == 0 && topk_mismatch == 0 && secs < 60.0;
    std::ostringstream d;
    d << "conv_max_err=" << conv_err << " (<=1e-5) gap_max_err=" << gap_err << " (<=1e-6) cumulative_rel_err="
      << cum_err << " (<=1e-6) argmax_mismatches=" << argmax_mismatch << " adaptive_k_mismatches=" << k_mismatch
      << " topk_mismatches=" << topk_mismatch << " time=" << secs << "s (limit 60s)";
    report(2, "oracle suite", ok, d.str());
}

// 3 and 4. Long-tail threshold sweep.
void longtail_sweep(const ModelGraph& model) {
    const auto t0 = Clock::now();
    const auto p = prepare(model, {});
    const std::vector<double> taus = {0.25, 0.5, 1.0, 1.5, 2.0};
    const auto sweep = sweep_tau(EngineConfig{}, p.model, p.warmed, p.scenario.stream, taus);
    const double secs = seconds_since(t0);

    std::ostringstream rows;
    bool effective = false;
    for (const auto& r : sweep.rows) {
        rows << " tau=" << format_tau(r.tau) << ":exit=" << format_real(r.exit_ratio)
             << ",drop=" << format_real(r.accuracy_drop.value_or(NAN));
        if (r.exit_ratio >= 0.5 && r.accuracy_drop && *r.accuracy_drop <= 0.025) effective = true;
    }
    report(3, "early exit effectiveness (exit_ratio>=0.5 with accuracy_drop<=0.025 at some tau)", effective,
           "baseline_accuracy=" + format_real(sweep.baseline.top1_accuracy.value_or(NAN)) + rows.str() +
               " time=" + format_real(secs) + "s (limit 300s)");
    if (secs >= 300.0) report(3, "sweep time budget", false, format_real(secs) + "s");

    bool monotone = true;
    for (std::size_t i = 1; i < sweep.rows.size(); ++i) {
        const auto& a = sweep.rows[i - 1];
        const auto& b = sweep.rows[i];
        if (b.exit_ratio > a.exit_ratio) monotone = false;
        if (b.accuracy.value_or(0) < a.accuracy.value_or(0)) monotone = false;
    }
    std::ostringstream d;
    for (const auto& r : sweep.rows) {
        d << " tau=" << format_tau(r.tau) << ":exit=" << format_real(r.exit_ratio)
          << ",acc=" << format_real(r.accuracy.value_or(NAN));
    }
    report(4, "monotone in tau (exit_ratio non-increasing, accuracy non-decreasing)", monotone, d.str().substr(1));
}

// 5. Adaptive cache size against a constant k = 5 on a class-count shift.
void shift_hit_ratio(const ModelGraph& model) {
    ScenarioOptions opt;
    opt.kind = ScenarioKind::Shift;
    const auto p = prepare(model, opt);
    EngineConfig adaptive;
    adaptive.cache_size_mode = CacheSizeMode::Adaptive;
    EngineConfig constant;
    constant.cache_size_mode = CacheSizeMode::Constant;
    constant.cache_size = 5;
    const auto a = run_stream(adaptive, p.model, p.warmed, p.scenario.stream);
    const auto c = run_stream(constant, p.model, p.warmed, p.scenario.stream);
    const double ha = a.metrics.hit_ratio.value_or(0);
    const double hc = c.metrics.hit_ratio.value_or(0);
    report(5, "adaptive cache hit ratio >= constant k=5", ha >= hc,
           "adaptive_hit=" + format_real(ha) + " constant5_hit=" + format_real(hc) +
               " adaptive_mean_k=" + format_real(a.metrics.mean_fast_memory_size));
}

// 6. Run-time center updates under template drift.
void drift_accuracy(const ModelGraph& model) {
    ScenarioOptions opt;
    opt.kind = ScenarioKind::Drift;
    const auto p = prepare(model, opt);
    EngineConfig on;
    on.adaptive_centers = true;
    EngineConfig off;
    off.adaptive_centers = false;
    const auto a = run_stream(on, p.model, p.warmed, p.scenario.stream);
    const auto f = run_stream(off, p.model, p.warmed, p.scenario.stream);
    const double acc_a = a.metrics.top1_accuracy.value_or(0);
    const double acc_f = f.metrics.top1_accuracy.value_or(0);
    report(6, "adaptive centers accuracy >= frozen centers under drift", acc_a >= acc_f,
           "adaptive_acc=" + format_real(acc_a) + " frozen_acc=" + format_real(acc_f) +
               " adaptive_exit=" + format_real(a.metrics.exit_ratio) + " frozen_exit=" + format_real(f.metrics.exit_ratio));
}

// 7. Center memory closed form and its size against raw feature maps.
void memory_footprint() {
    struct Config {
        std::size_t width;
        std::size_t classes;
        std::size_t fast;
    };
    const std::vector<Config> configs = {{8, 5, 2}, {16, 10, 5}, {32, 100, 7}};
    bool ok = true;
    std::ostringstream d;
    for (const auto& c : configs) {
        FixtureModelOptions mo;
        mo.base_width = c.width;
        const auto model = fixture_model(mo);
        std::size_t channel_sum = 0;
        std::uint64_t raw = 0;
        for (const auto& layer : model.layers()) {
            const Shape& s = layer.output_shape;
            if (layer.is_exit_point) {
                channel_sum += s.channels;
                raw += 4ull * s.channels * s.height * s.width;
            }
        }
        GlobalMemory g(c.classes, model.exit_channels());
        FastMemory fast;
        for (std::size_t i = 0; i < c.fast; ++i) fast.classes.push_back(static_cast<ClassId>(i));
        const std::uint64_t want = c.classes * channel_sum * 4 + 4 * c.fast + 16 * c.classes;
        const std::uint64_t got = center_memory_bytes(g, fast);
        const std::uint64_t raw_cache = c.classes * raw;
        const double ratio = static_cast<double>(raw_cache) / static_cast<double>(got);
        if (got != want || raw != raw_feature_map_bytes(model) || ratio < 100.0) ok = false;
        d << " width=" << c.width << ",n=" << c.classes << ",fast=" << c.fast << ":bytes=" << got
          << ",closed_form=" << want << ",raw_maps=" << raw_cache << ",ratio=" << format_real(ratio);
    }
    report(7, "center memory matches closed form and is >=100x below raw feature maps", ok, d.str().substr(1));
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int sh(const std::string& cmd) {
    return std::system((cmd + " > /dev/null 2>&1").c_str());
}

// 8. Same seed, same bytes.
void determinism(const ModelGraph& model, const std::string& cli) {
    ScenarioOptions opt;
    opt.frames = 300;
    std::vector<std::string> mismatched;
    std::size_t compared = 0;

    const auto once = [&] {
        const auto p = prepare(model, opt);
        const std::vector<double> taus = {0.5, 1.0, kNeverExit};
        const auto run = run_stream(EngineConfig{}, p.model, p.warmed, p.scenario.stream);
        const auto sweep = sweep_tau(EngineConfig{}, p.model, p.warmed, p.scenario.stream, taus);
        const auto abl = ablation_run(EngineConfig{}, p.model, p.warmed, p.scenario.stream);
        return std::vector<std::string>{frames_csv(run.frames), metrics_to_json(run.metrics).dump(2),
                                        sweep_csv(sweep), sweep_to_json(sweep).dump(2), ablation_csv(abl),
                                        ablation_to_json(abl).dump(2)};
    };
    const auto first = once();
    const auto second = once();
    for (std::size_t i = 0; i < first.size(); ++i) {
        ++compared;
        if (first[i] != second[i]) mismatched.push_back("in-process#" + std::to_string(i));
    }

    if (!cli.empty()) {
        const fs::path work = fs::temp_directory_path() / "smtm_acceptance_det";
        fs::remove_all(work);
        const std::string q = "\"" + cli + "\"";
        const std::string w = work.string();
        bool ok = sh(q + " gen-trace --frames 300 --seed 5 --out " + w + "/data") == 0 &&
                  sh(q + " warmup --trace " + w + "/data/warmup.bin --out " + w + "/data") == 0;
        const std::vector<std::pair<std::string, std::vector<std::string>>> commands = {
            {"run --dump-tables --dump-similarity", {"frames.csv", "metrics.json", "tables.csv", "similarity.csv", "config.json"}},
            {"sweep --taus 0.5,1,inf", {"sweep.csv", "sweep.json", "config.json"}},
            {"ablate", {"ablation.csv", "ablation.json", "config.json"}},
        };
        for (const auto& [args, files] : commands) {
            const std::string sub = args.substr(0, args.find(' '));
            for (const char* rep : {"a", "b"}) {
                ok = ok && sh(q + " " + args + " --seed 5 --trace " + w + "/data/trace.bin --centers " + w +
                              "/data/centers.bin --out " + w + "/" + sub + "_" + rep) == 0;
            }
            for (const auto& f : files) {
                ++compared;
                const auto a = slurp(work / (sub + "_a") / f);
                if (a.empty() || a != slurp(work / (sub + "_b") / f)) mismatched.push_back(sub + "/" + f);
            }
        }
        if (!ok) mismatched.push_back("cli-invocation");
    }

    std::ostringstream d;
    d << "compared=" << compared << " mismatched=" << mismatched.size();
    for (const auto& m : mismatched) d << " " << m;
    if (cli.empty()) d << " (cli check skipped: no --cli given)";
    report(8, "byte-identical reports for a fixed seed", mismatched.empty(), d.str());
}

}  // namespace

int main(int argc, char** argv) {
    std::string cli;
    for (int i = 1; i + 1 < argc; ++i) {
        if (std::string(argv[i]) == "--cli") cli = argv[i + 1];
    }
    const auto model = fixture_model();
    const std::vector<std::function<void()>> checks = {
        [&] { baseline_equivalence(model); },
        [&] { oracle_suite(); },
        [&] { longtail_sweep(model); },
        [&] { shift_hit_ratio(model); },
        [&] { drift_accuracy(model); },
        [&] { memory_footprint(); },
        [&] { determinism(model, cli); },
    };
    for (const auto& check : checks) {
        try {
            check();
        } catch (const std::exception& e) {
            std::cout << "FAIL error: " << e.what() << std::endl;
            ++failures;
        }
    }
    std::cout << (failures == 0 ? "ALL PASS" : std::to_string(failures) + " FAILED") << std::endl;
    return failures == 0 ? 0 : 1;
}
