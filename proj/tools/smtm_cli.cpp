// smtm: command-line front end for trace generation, warm-up, runs,
// tau sweeps and ablations.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "smtm/errors.hpp"
#include "smtm/fixtures.hpp"
#include "smtm/harness.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace smtm;

namespace {

constexpr std::uint64_t kDefaultSeed = 11;

std::vector<double> split_reals(const std::string& text) {
    std::vector<double> out;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        if (item.empty()) continue;
        out.push_back(parse_tau(item));
    }
    return out;
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("failed writing " + path.string());
}

void write_json(const fs::path& path, const json& doc) { write_text(path, doc.dump(2) + "\n"); }

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

// Everything a command needs, resolved from defaults, an optional replayed
// config manifest, then explicit flags.
struct Options {
    std::string command;
    std::optional<std::uint64_t> seed;
    std::string config_path;
    std::string out = "out";

    // inputs
    std::string model;
    std::string weights;
    std::string centers;
    std::string trace;

    // engine
    EngineConfig engine;
    std::string tau = "1";
    std::size_t cache_size = 0;
    bool adaptive_size = false;
    std::string adaptive_centers;
    std::string persistent_decay;

    // reports
    std::string taus = "0.25,0.5,1,1.5,2";
    bool dump_tables = false;
    bool dump_similarity = false;

    // generators
    std::string scenario = "longtail";
    std::size_t classes = 10;
    std::size_t frames = 1442;
    std::size_t warmup_per_class = 20;
    double zipf = 1.0;
    std::string frequencies;
    double burst = 10.0;
    float noise = 0.5f;
    float drift = 0.0f;
    std::size_t width = 32;
    std::size_t head_classes = 0;
    std::size_t warmup_cap = 0;
};

std::uint64_t resolve_seed(const Options& o) {
    if (o.seed) return *o.seed;
    if (const char* env = std::getenv("SMTM_SEED")) {
        try {
            return std::stoull(env);
        } catch (const std::exception&) {
            throw ConfigError(std::string("SMTM_SEED is not an unsigned integer: ") + env);
        }
    }
    return kDefaultSeed;
}

bool parse_switch(const std::string& text, const char* flag) {
    if (text == "on" || text == "true" || text == "1") return true;
    if (text == "off" || text == "false" || text == "0") return false;
    throw ConfigError(std::string(flag) + " expects on/off, got '" + text + "'");
}

// Applies a replayed manifest underneath the explicit flags.
void overlay_manifest(Options& o, const CLI::App& sub) {
    if (o.config_path.empty()) return;
    const json doc = read_json(o.config_path);
    const auto given = [&](const char* name) { return sub.count(name) > 0; };
    if (doc.contains("engine")) {
        EngineConfig replay = config_from_json(doc["engine"]);
        const EngineConfig explicit_flags = o.engine;
        o.engine = replay;
        if (given("--window")) o.engine.window = explicit_flags.window;
        if (given("--cl")) o.engine.confidence_level = explicit_flags.confidence_level;
        if (given("--decay-base")) o.engine.decay_base = explicit_flags.decay_base;
        if (given("--replacement-period")) o.engine.replacement_period = explicit_flags.replacement_period;
        if (given("--k-min")) o.engine.k_min = explicit_flags.k_min;
        if (given("--k-max")) o.engine.k_max = explicit_flags.k_max;
        if (!given("--tau")) o.tau = format_tau(replay.tau);
    }
    if (doc.contains("inputs")) {
        const auto& in = doc["inputs"];
        const auto take = [&](const char* key, const char* flag, std::string& field) {
            if (!given(flag) && in.contains(key) && in[key].is_string()) field = in[key].get<std::string>();
        };
        take("model", "--model", o.model);
        take("weights", "--weights", o.weights);
        take("centers", "--centers", o.centers);
        take("trace", "--trace", o.trace);
    }
    if (doc.contains("taus") && !given("--taus")) {
        std::string joined;
        for (const auto& t : doc["taus"]) {
            if (!joined.empty()) joined += ",";
            joined += t.is_string() ? t.get<std::string>() : format_real(t.get<double>());
        }
        o.taus = joined;
    }
    if (doc.contains("seed") && !given("--seed")) o.seed = doc["seed"].get<std::uint64_t>();
    if (doc.contains("dump_tables") && !given("--dump-tables")) o.dump_tables = doc["dump_tables"].get<bool>();
    if (doc.contains("dump_similarity") && !given("--dump-similarity")) {
        o.dump_similarity = doc["dump_similarity"].get<bool>();
    }
}

void finalize_engine(Options& o) {
    o.engine.tau = parse_tau(o.tau);
    if (o.cache_size > 0 && o.adaptive_size) throw ConfigError("--cache-size and --adaptive-size are exclusive");
    if (o.cache_size > 0) {
        o.engine.cache_size_mode = CacheSizeMode::Constant;
        o.engine.cache_size = o.cache_size;
    }
    if (o.adaptive_size) o.engine.cache_size_mode = CacheSizeMode::Adaptive;
    if (!o.adaptive_centers.empty()) o.engine.adaptive_centers = parse_switch(o.adaptive_centers, "--adaptive-centers");
    if (!o.persistent_decay.empty()) o.engine.persistent_decay = parse_switch(o.persistent_decay, "--persistent-decay");
}

ModelGraph open_model(const Options& o) {
    if (o.model.empty()) return fixture_model({o.width, o.head_classes, resolve_seed(o)});
    fs::path weights = o.weights;
    if (weights.empty()) weights = fs::path(o.model).replace_extension(".bin");
    return load_model(o.model, weights);
}

json inputs_json(const Options& o) {
    json in;
    in["model"] = o.model.empty() ? json(nullptr) : json(o.model);
    in["weights"] = o.weights.empty() ? json(nullptr) : json(o.weights);
    in["centers"] = o.centers.empty() ? json(nullptr) : json(o.centers);
    in["trace"] = o.trace.empty() ? json(nullptr) : json(o.trace);
    if (o.model.empty()) in["fixture_width"] = o.width;
    return in;
}

json manifest(const Options& o) {
    json doc;
    doc["command"] = o.command;
    doc["seed"] = resolve_seed(o);
    return doc;
}

void require(const std::string& value, const char* flag) {
    if (value.empty()) throw ConfigError(std::string(flag) + " is required");
}

// --- commands ---------------------------------------------------------------

void cmd_gen_trace(const Options& o) {
    const fs::path out = o.out;
    const auto seed = resolve_seed(o);
    ScenarioOptions so;
    so.kind = parse_scenario_kind(o.scenario);
    so.num_classes = o.classes;
    so.frames = o.frames;
    so.warmup_per_class = o.warmup_per_class;
    so.noise = o.noise;
    so.seed = seed;
    if (o.drift > 0.0f) {
        so.kind = ScenarioKind::Drift;
        so.drift_strength = o.drift;
    }
    Scenario sc = make_scenario(so);

    // Explicit marginal or exponent overrides for the plain long-tail shape.
    const bool custom = so.kind == ScenarioKind::LongTail &&
                        (!o.frequencies.empty() || o.zipf != 1.0 || o.burst != 10.0);
    json doc = manifest(o);
    doc["scenario"] = std::string(to_string(so.kind));
    if (custom) {
        StreamSpec spec;
        spec.num_classes = o.classes;
        spec.zipf_exponent = o.zipf;
        if (!o.frequencies.empty()) spec.frequencies = split_reals(o.frequencies);
        spec.mean_run_length = o.burst;
        spec.frames = o.frames;
        spec.noise = o.noise;
        spec.seed = seed + 2;
        sc.stream = generate_longtail_trace(spec, sc.templates);
        doc["zipf"] = o.zipf;
        doc["burst"] = o.burst;
        if (!spec.frequencies.empty()) doc["frequencies"] = spec.frequencies;
    }
    save_trace(sc.stream, out / "trace.bin");
    if (o.warmup_per_class > 0) save_trace(sc.warmup, out / "warmup.bin");

    doc["classes"] = o.classes;
    doc["frames"] = o.frames;
    doc["warmup_per_class"] = o.warmup_per_class;
    doc["noise"] = o.noise;
    doc["drift"] = so.drift_strength;
    write_json(out / "config.json", doc);
    std::cout << "wrote " << sc.stream.size() << " frames to " << (out / "trace.bin").string() << "\n";
}

void cmd_gen_model(const Options& o) {
    const fs::path out = o.out;
    const auto model = fixture_model({o.width, o.head_classes, resolve_seed(o)});
    save_model(model, out / "model.json", out / "model.bin");
    json doc = manifest(o);
    doc["width"] = o.width;
    doc["head_classes"] = o.head_classes;
    write_json(out / "config.json", doc);
    std::cout << "wrote " << model.layers().size() << " layers, " << model.num_exit_points() << " exit points to "
              << (out / "model.json").string() << "\n";
}

void cmd_warmup(const Options& o) {
    require(o.trace, "--trace");
    const fs::path out = o.out;
    const auto model = open_model(o);
    const Trace set = load_trace(o.trace);
    if (!set.has_labels) throw ConfigError("warm-up trace must carry labels");
    WarmupOptions wo;
    if (o.warmup_cap > 0) wo.update_count_cap = o.warmup_cap;
    std::vector<ClassId> missing;
    const auto global = warm_up(model, set.frames, set.labels, o.classes, wo, &missing);
    save_centers(global, out / "centers.bin");
    json doc = manifest(o);
    doc["inputs"] = inputs_json(o);
    doc["classes"] = o.classes;
    doc["warmup_cap"] = o.warmup_cap;
    doc["missing_classes"] = missing;
    write_json(out / "config.json", doc);
    for (auto c : missing) std::cerr << "warning: class " << c << " has no warm-up samples\n";
    std::cout << "wrote centers for " << o.classes << " classes to " << (out / "centers.bin").string() << "\n";
}

struct Loaded {
    ModelGraph model;
    GlobalMemory global;
    Trace trace;
};

Loaded load_inputs(const Options& o) {
    require(o.centers, "--centers");
    require(o.trace, "--trace");
    auto model = open_model(o);
    auto global = load_centers(o.centers);
    auto trace = load_trace(o.trace);
    return {std::move(model), std::move(global), std::move(trace)};
}

json run_manifest(const Options& o) {
    json doc = manifest(o);
    doc["inputs"] = inputs_json(o);
    doc["engine"] = config_to_json(o.engine);
    doc["dump_tables"] = o.dump_tables;
    doc["dump_similarity"] = o.dump_similarity;
    return doc;
}

void cmd_run(const Options& o) {
    const fs::path out = o.out;
    auto in = load_inputs(o);

    std::ostringstream tables;
    std::ostringstream sims;
    RunHooks hooks;
    if (o.dump_tables) {
        tables << "frame_id,class,frequency,absent,score\n";
        hooks.on_replacement = [&](std::size_t frame, const FrequencyTable& ft, const TimeStampTable& ts,
                                   std::span<const double> scores) {
            for (std::size_t c = 0; c < scores.size(); ++c) {
                tables << frame << ',' << c << ',' << format_real(ft.counts[c]) << ',' << ts.absent[c] << ','
                       << format_real(scores[c]) << '\n';
            }
        };
    }
    if (o.dump_similarity) {
        sims << "frame_id,layer,class,similarity,separability\n";
        hooks.on_similarity = [&](std::size_t frame, const SimilarityRow& row) {
            std::string sep = "NA";
            if (row.entries.size() >= 2) {
                const auto s = single_layer_separability(row);
                if (s.status == SeparabilityStatus::Ok) sep = format_real(s.value);
            }
            for (const auto& [cls, sim] : row.entries) {
                sims << frame << ',' << row.layer_id << ',' << cls << ',' << format_real(sim) << ',' << sep << '\n';
            }
        };
    }
    const auto result = run_stream(o.engine, in.model, in.global, in.trace, &hooks);
    write_text(out / "frames.csv", frames_csv(result.frames));
    write_json(out / "metrics.json", metrics_to_json(result.metrics));
    if (o.dump_tables) write_text(out / "tables.csv", tables.str());
    if (o.dump_similarity) write_text(out / "similarity.csv", sims.str());
    write_json(out / "config.json", run_manifest(o));

    const auto& m = result.metrics;
    std::cout << "frames " << m.frames << "  exit ratio " << format_real(m.exit_ratio) << "  flops fraction "
              << format_real(m.mean_flops_fraction);
    if (m.top1_accuracy) std::cout << "  accuracy " << format_real(*m.top1_accuracy);
    if (m.hit_ratio) std::cout << "  hit ratio " << format_real(*m.hit_ratio);
    std::cout << "\n";
}

void cmd_baseline(const Options& o) {
    const fs::path out = o.out;
    auto in = load_inputs(o);
    const auto result = baseline_run(in.model, in.trace, in.global);
    write_text(out / "frames.csv", frames_csv(result.frames));
    write_json(out / "metrics.json", metrics_to_json(result.metrics));
    json doc = manifest(o);
    doc["inputs"] = inputs_json(o);
    write_json(out / "config.json", doc);
    std::cout << "frames " << result.metrics.frames;
    if (result.metrics.top1_accuracy) std::cout << "  accuracy " << format_real(*result.metrics.top1_accuracy);
    std::cout << "\n";
}

void cmd_sweep(const Options& o) {
    const fs::path out = o.out;
    auto in = load_inputs(o);
    const auto taus = split_reals(o.taus);
    if (taus.empty()) throw ConfigError("--taus needs at least one value");
    const auto report = sweep_tau(o.engine, in.model, in.global, in.trace, taus);
    write_text(out / "sweep.csv", sweep_csv(report));
    write_json(out / "sweep.json", sweep_to_json(report));
    json doc = run_manifest(o);
    json list = json::array();
    for (double t : taus) list.push_back(format_tau(t));
    doc["taus"] = list;
    write_json(out / "config.json", doc);
    std::cout << sweep_csv(report);
}

void cmd_ablate(const Options& o) {
    const fs::path out = o.out;
    auto in = load_inputs(o);
    const auto report = ablation_run(o.engine, in.model, in.global, in.trace);
    write_text(out / "ablation.csv", ablation_csv(report));
    write_json(out / "ablation.json", ablation_to_json(report));
    write_json(out / "config.json", run_manifest(o));
    std::cout << ablation_csv(report);
}

void cmd_inspect(const Options& o) {
    const auto model = open_model(o);
    std::cout << "model " << model.name() << "  input " << model.input_shape().str() << "  total flops "
              << model.total_flops() << "\n";
    std::cout << "layer  kind          output        params      flops  exit\n";
    std::size_t exit = 0;
    json layers = json::array();
    for (std::size_t i = 0; i < model.layers().size(); ++i) {
        const auto& l = model.layers()[i];
        if (l.is_exit_point) ++exit;
        std::ostringstream line;
        line << std::setw(5) << i << "  " << std::left << std::setw(12) << to_string(l.kind) << "  " << std::setw(12)
             << l.output_shape.str() << std::right << std::setw(8) << l.param_count << std::setw(11) << l.flops;
        if (l.is_exit_point) line << "  " << exit;
        std::cout << line.str() << "\n";
        layers.push_back({{"index", i},
                          {"kind", std::string(to_string(l.kind))},
                          {"output", l.output_shape.str()},
                          {"params", l.param_count},
                          {"flops", l.flops},
                          {"exit", l.is_exit_point ? json(exit) : json(nullptr)}});
    }
    if (!o.out.empty() && o.out != "-") {
        json doc = manifest(o);
        doc["inputs"] = inputs_json(o);
        doc["layers"] = layers;
        doc["total_flops"] = model.total_flops();
        doc["exit_channels"] = model.exit_channels();
        doc["raw_feature_map_bytes"] = raw_feature_map_bytes(model);
        write_json(fs::path(o.out) / "model_summary.json", doc);
    }
}

void add_common(CLI::App* sub, Options& o) {
    sub->add_option("--seed", o.seed, "RNG seed (falls back to SMTM_SEED, then 11)");
    sub->add_option("--out", o.out, "Output directory");
}

void add_model(CLI::App* sub, Options& o) {
    sub->add_option("--model", o.model, "Model manifest (JSON); the built-in fixture when omitted");
    sub->add_option("--weights", o.weights, "Weight blob (default: manifest path with .bin)");
    sub->add_option("--width", o.width, "Fixture base width when no manifest is given");
}

void add_engine(CLI::App* sub, Options& o) {
    sub->add_option("--config", o.config_path, "Replay the effective config written by an earlier run");
    sub->add_option("--centers", o.centers, "Center store from `warmup`");
    sub->add_option("--trace", o.trace, "Input trace");
    sub->add_option("--tau", o.tau, "Exit threshold, real >= 0 or inf");
    sub->add_option("--window", o.engine.window, "Frames per forgetting period");
    sub->add_option("--cl", o.engine.confidence_level, "Confidence level for the adaptive cache size");
    sub->add_option("--cache-size", o.cache_size, "Constant fast-memory size (selects constant mode)");
    sub->add_flag("--adaptive-size", o.adaptive_size, "Adaptive fast-memory size (default)");
    sub->add_option("--k-min", o.engine.k_min, "Smallest adaptive cache size");
    sub->add_option("--k-max", o.engine.k_max, "Largest adaptive cache size, 0 = number of classes");
    sub->add_option("--adaptive-centers", o.adaptive_centers, "on|off, update centers at run time");
    sub->add_option("--persistent-decay", o.persistent_decay, "on|off, decay the frequency table every window");
    sub->add_option("--decay-base", o.engine.decay_base, "Decay base in (0, 1)");
    sub->add_option("--replacement-period", o.engine.replacement_period, "Frames between fast-memory refreshes");
}

void add_reports(CLI::App* sub, Options& o) {
    sub->add_flag("--dump-tables", o.dump_tables, "Write frequency/time-stamp tables per refresh (tables.csv)");
    sub->add_flag("--dump-similarity", o.dump_similarity,
                  "Write per-layer similarities and separability (similarity.csv)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Semantic-memory early-exit inference harness"};
    app.require_subcommand(1);
    Options o;

    auto* gen = app.add_subcommand("gen-trace", "Generate a synthetic stream and warm-up set");
    add_common(gen, o);
    gen->add_option("--scenario", o.scenario, "longtail, shift or drift");
    gen->add_option("--classes", o.classes, "Number of classes");
    gen->add_option("--frames", o.frames, "Stream length");
    gen->add_option("--warmup-per-class", o.warmup_per_class, "Labeled warm-up frames per class, 0 to skip");
    gen->add_option("--zipf", o.zipf, "Zipf exponent of the class marginal");
    gen->add_option("--frequencies", o.frequencies, "Explicit comma-separated class marginal");
    gen->add_option("--burst", o.burst, "Mean length of same-class runs");
    gen->add_option("--noise", o.noise, "Std-dev of additive Gaussian noise");
    gen->add_option("--drift", o.drift, "Share of template cells repainted in the stream (0 = none)");

    auto* gen_model = app.add_subcommand("gen-model", "Write the fixture model as manifest + weights");
    add_common(gen_model, o);
    gen_model->add_option("--width", o.width, "Base width");
    gen_model->add_option("--head-classes", o.head_classes, "Append a dense + softmax head with this many classes");

    auto* warm = app.add_subcommand("warmup", "Build class centers from a labeled trace");
    add_common(warm, o);
    add_model(warm, o);
    warm->add_option("--trace", o.trace, "Labeled warm-up trace")->required();
    warm->add_option("--classes", o.classes, "Number of classes");
    warm->add_option("--cap", o.warmup_cap, "Cap on the warm-up update count m, 0 = none");

    auto* run = app.add_subcommand("run", "Stream a trace through the engine");
    add_common(run, o);
    add_model(run, o);
    add_engine(run, o);
    add_reports(run, o);

    auto* base = app.add_subcommand("baseline", "Full inference on every frame");
    add_common(base, o);
    add_model(base, o);
    base->add_option("--config", o.config_path, "Replay the effective config written by an earlier run");
    base->add_option("--centers", o.centers, "Center store from `warmup`");
    base->add_option("--trace", o.trace, "Input trace");

    auto* sweep = app.add_subcommand("sweep", "One run per tau plus a baseline");
    add_common(sweep, o);
    add_model(sweep, o);
    add_engine(sweep, o);
    sweep->add_option("--taus", o.taus, "Comma-separated tau values");

    auto* ablate = app.add_subcommand("ablate", "{constant, adaptive} cache size x {frozen, adaptive} centers");
    add_common(ablate, o);
    add_model(ablate, o);
    add_engine(ablate, o);

    auto* inspect = app.add_subcommand("inspect-model", "Print layers, shapes, FLOPs and exit points");
    add_model(inspect, o);
    inspect->add_option("--seed", o.seed, "Fixture seed when no manifest is given");
    inspect->add_option("--out", o.out, "Also write model_summary.json here");
    o.out.clear();

    CLI11_PARSE(app, argc, argv);
    try {
        CLI::App* sub = app.get_subcommands().front();
        o.command = sub->get_name();
        if (o.out.empty() && o.command != "inspect-model") o.out = "out";
        overlay_manifest(o, *sub);
        finalize_engine(o);
        if (o.command == "gen-trace") cmd_gen_trace(o);
        else if (o.command == "gen-model") cmd_gen_model(o);
        else if (o.command == "warmup") cmd_warmup(o);
        else if (o.command == "run") cmd_run(o);
        else if (o.command == "baseline") cmd_baseline(o);
        else if (o.command == "sweep") cmd_sweep(o);
        else if (o.command == "ablate") cmd_ablate(o);
        else cmd_inspect(o);
    } catch (const smtm::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
