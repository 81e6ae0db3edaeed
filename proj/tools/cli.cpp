// Copyright 2026 The evkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <map>
#include <memory>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "evkit/curation.hpp"
#include "evkit/distill.hpp"
#include "evkit/error.hpp"
#include "evkit/evmask.hpp"
#include "evkit/evstream.hpp"
#include "evkit/flow.hpp"
#include "evkit/flowdecomp.hpp"
#include "evkit/iei.hpp"
#include "evkit/mask.hpp"
#include "evkit/rng.hpp"
#include "evkit/tapeval.hpp"
#include "io_util.hpp"

namespace evkit::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

enum class LogLevel { kError = 0, kWarn = 1, kInfo = 2, kDebug = 3 };

const char* level_name(LogLevel level) {
    switch (level) {
        case LogLevel::kError: return "error";
        case LogLevel::kWarn: return "warn";
        case LogLevel::kInfo: return "info";
        case LogLevel::kDebug: return "debug";
    }
    return "info";
}

// One JSON object per line on the diagnostic stream.
class Logger {
public:
    Logger(std::ostream& err, LogLevel level) : err_(err), level_(level) {}

    void log(LogLevel level, const std::string& event, json fields = json::object()) {
        if (static_cast<int>(level) > static_cast<int>(level_)) return;
        json line = {{"level", level_name(level)}, {"event", event}};
        for (auto& [k, v] : fields.items()) line[k] = v;
        err_ << line.dump() << '\n';
    }
    void warn(const std::string& event, json fields = json::object()) { log(LogLevel::kWarn, event, std::move(fields)); }
    void info(const std::string& event, json fields = json::object()) { log(LogLevel::kInfo, event, std::move(fields)); }

private:
    std::ostream& err_;
    LogLevel level_;
};

LogLevel log_level_from_env() {
    const char* raw = std::getenv("EVKIT_LOG_LEVEL");
    if (raw == nullptr || *raw == '\0') return LogLevel::kInfo;
    std::string s(raw);
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    if (s == "error") return LogLevel::kError;
    if (s == "warn" || s == "warning") return LogLevel::kWarn;
    if (s == "info") return LogLevel::kInfo;
    if (s == "debug") return LogLevel::kDebug;
    throw config_error("EVKIT_LOG_LEVEL must be one of error, warn, info, debug (got '" + s + "')");
}

struct Context {
    std::ostream& out;
    Logger& log;
};

template <typename F>
void parallel_for(std::size_t n, unsigned workers, F&& fn) {
    const auto threads = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, workers), n));
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (unsigned w = 0; w < threads; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    // The lowest failing index wins so the reported error does not depend on scheduling.
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

template <typename T>
T parse_number(const std::string& text, const std::string& what) {
    T value{};
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc() || ptr != end) throw config_error("bad " + what + " '" + text + "'");
    return value;
}

std::vector<std::string> split(const std::string& text, char sep) {
    std::vector<std::string> parts;
    std::string cur;
    std::istringstream in(text);
    while (std::getline(in, cur, sep)) parts.push_back(cur);
    return parts;
}

std::optional<SensorSize> parse_sensor(const std::string& text) {
    if (text.empty()) return std::nullopt;
    const auto x = text.find('x');
    if (x == std::string::npos) throw config_error("sensor size must look like WIDTHxHEIGHT, got '" + text + "'");
    SensorSize s{parse_number<std::uint32_t>(text.substr(0, x), "width"),
                 parse_number<std::uint32_t>(text.substr(x + 1), "height")};
    if (s.width == 0 || s.height == 0) throw config_error("sensor size must be positive, got '" + text + "'");
    return s;
}

Crop parse_crop(const std::string& text) {
    const auto parts = split(text, ',');
    if (parts.size() != 4) throw config_error("crop must look like X,Y,WIDTH,HEIGHT, got '" + text + "'");
    return {parse_number<int>(parts[0], "crop x"), parse_number<int>(parts[1], "crop y"),
            parse_number<int>(parts[2], "crop width"), parse_number<int>(parts[3], "crop height")};
}

json crop_json(const Crop& c) { return json::array({c.x, c.y, c.width, c.height}); }

Crop crop_from_json(const json& j) {
    if (!j.is_array() || j.size() != 4) throw validation_error("crop must be [x, y, width, height]");
    return {j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>()};
}

EventStream load_stream(const std::string& path, const std::string& format, const std::string& sensor) {
    const EventFormat f = format == "auto"  ? guess_event_format(path)
                          : format == "csv" ? EventFormat::kCsv
                                            : EventFormat::kTetoEvt1;
    return load_events(path, f, parse_sensor(sensor));
}

void add_event_format(CLI::App* c, std::string& format, std::string& sensor) {
    c->add_option("--format", format, "Event file format")->check(CLI::IsMember({"auto", "tetoevt1", "csv"}));
    c->add_option("--sensor", sensor, "Sensor size WIDTHxHEIGHT, required for CSV events");
}

void add_workers(CLI::App* c, unsigned& workers) {
    c->add_option("--workers", workers, "Worker threads; output does not depend on this")->check(CLI::Range(1u, 1024u));
}

// Timestamps from a CSV whose first column is t_us; a non-numeric first row
// is taken as the header.
std::vector<Timestamp> read_timestamps(const std::string& path) {
    const auto text = detail::read_file_text(path);
    std::vector<Timestamp> out;
    std::size_t offset = 0;
    bool first = true;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        const auto line_start = offset;
        offset += line.size() + 1;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        auto field = line.substr(0, line.find(','));
        field.erase(0, field.find_first_not_of(" \t"));
        field.erase(field.find_last_not_of(" \t") + 1);
        Timestamp t = 0;
        const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), t);
        const bool ok = ec == std::errc() && ptr == field.data() + field.size();
        if (!ok) {
            if (first) {
                first = false;
                continue;
            }
            throw ParseError("bad timestamp '" + field + "' in " + path, line_start);
        }
        first = false;
        out.push_back(t);
    }
    if (out.empty()) throw empty_input_error("no timestamps in " + path);
    return out;
}

fs::path resolve(const fs::path& base, const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() ? path : base / path;
}

std::vector<FlowField> load_flow_frames(const fs::path& base, const std::vector<std::string>& flows,
                                        const std::vector<std::string>& vis, const std::vector<std::string>& conf) {
    if (flows.empty()) throw config_error("at least one flow file is required");
    if (!vis.empty() && vis.size() != flows.size()) throw config_error("need one visibility plane per flow file");
    if (!conf.empty() && conf.size() != flows.size()) throw config_error("need one confidence plane per flow file");
    std::vector<FlowField> frames;
    frames.reserve(flows.size());
    for (std::size_t i = 0; i < flows.size(); ++i) {
        auto f = read_flo(resolve(base, flows[i]));
        if (!vis.empty()) {
            const auto p = resolve(base, vis[i]);
            f.visibility = read_plane(p, sidecar_path(p));
        }
        if (!conf.empty()) {
            const auto p = resolve(base, conf[i]);
            f.confidence = read_plane(p, sidecar_path(p));
        }
        f.validate();
        frames.push_back(std::move(f));
    }
    return frames;
}

json threshold_json(const MadThreshold& t) { return {{"median", t.median}, {"mad", t.mad}, {"tau", t.tau}}; }

// ---------------------------------------------------------------- stack

struct StackOpts {
    std::string events;
    std::string format = "auto";
    std::string sensor;
    std::vector<Timestamp> times;
    std::int64_t total_events = 300000;
    int bins = 10;
    std::string out_dir;
    unsigned workers = 1;
};

CLI::App* add_stack(CLI::App& app, StackOpts& o) {
    auto* c = app.add_subcommand("stack", "Build multi-scale event stacks at reference timestamps");
    c->add_option("--events", o.events, "Event file")->required();
    add_event_format(c, o.format, o.sensor);
    c->add_option("--t", o.times, "Reference timestamps in microseconds")->required()->delimiter(',');
    c->add_option("-N,--total-events", o.total_events, "Events in the widest bin");
    c->add_option("-B,--bins", o.bins, "Number of bins");
    c->add_option("--out-dir", o.out_dir, "Output directory")->required();
    add_workers(c, o.workers);
    return c;
}

void run_stack(const StackOpts& o, Context& ctx) {
    const StackConfig cfg{o.total_events, o.bins};
    for (const auto& w : cfg.validate()) ctx.log.warn("config_warning", {{"message", w}});
    if (std::set<Timestamp>(o.times.begin(), o.times.end()).size() != o.times.size()) {
        throw config_error("duplicate reference timestamps");
    }
    const auto stream = load_stream(o.events, o.format, o.sensor);
    fs::create_directories(o.out_dir);
    std::vector<json> outputs(o.times.size());
    parallel_for(o.times.size(), o.workers, [&](std::size_t i) {
        const auto stack = build_event_stack(stream, o.times[i], cfg);
        const auto stem = fs::path(o.out_dir) / ("stack_" + std::to_string(o.times[i]));
        auto bin = stem;
        bin += ".bin";
        auto side = stem;
        side += ".json";
        write_event_stack(stack, bin, side);
        outputs[i] = {{"t_us", o.times[i]}, {"path", bin.string()}, {"counts", stack.counts}};
    });
    ctx.out << json{{"stacks", outputs}}.dump() << '\n';
}

// ---------------------------------------------------------------- iei

struct IeiOpts {
    std::string events;
    std::string format = "auto";
    std::string sensor;
    int bins = 200;
    double iei_max = 0;
    std::string out_csv;
    std::string out_json;
};

CLI::App* add_iei(CLI::App& app, IeiOpts& o) {
    auto* c = app.add_subcommand("iei", "Inter-event interval histogram of one stream");
    c->add_option("--events", o.events, "Event file")->required();
    add_event_format(c, o.format, o.sensor);
    c->add_option("--bins", o.bins, "Histogram bins");
    c->add_option("--max", o.iei_max, "Histogram range in microseconds; 0 uses the 99.9th percentile")
        ->check(CLI::NonNegativeNumber);
    c->add_option("--out-csv", o.out_csv, "Histogram CSV (bin_left_us,density)");
    c->add_option("--out-json", o.out_json, "Summary JSON");
    return c;
}

json histogram_summary(const IeiHistogram& h) {
    return {{"bins", h.bins},
            {"iei_max_us", h.iei_max},
            {"bin_width_us", h.bin_width},
            {"samples", h.total_samples},
            {"mean_us", h.mean}};
}

void run_iei(const IeiOpts& o, Context& ctx) {
    const auto stream = load_stream(o.events, o.format, o.sensor);
    const auto intervals = compute_iei(stream);
    const auto hist = iei_histogram(intervals, o.bins, o.iei_max > 0 ? std::optional<double>(o.iei_max) : std::nullopt);
    if (!o.out_csv.empty()) detail::write_file_text(o.out_csv, histogram_csv(hist));
    const auto summary = histogram_summary(hist);
    if (!o.out_json.empty()) detail::write_json(o.out_json, summary);
    ctx.out << summary.dump() << '\n';
}

// ---------------------------------------------------------------- compare

struct CompareOpts {
    std::string real;
    std::string synth;
    std::string format = "auto";
    std::string sensor;
    int bins = 200;
    double iei_max = 0;
    std::string out_dir;
};

CLI::App* add_compare(CLI::App& app, CompareOpts& o) {
    auto* c = app.add_subcommand("compare", "Compare inter-event interval statistics of two streams");
    c->add_option("--real", o.real, "Real event file")->required();
    c->add_option("--synth", o.synth, "Synthetic event file")->required();
    add_event_format(c, o.format, o.sensor);
    c->add_option("--bins", o.bins, "Histogram bins");
    c->add_option("--max", o.iei_max, "Shared histogram range in microseconds; 0 picks automatically")
        ->check(CLI::NonNegativeNumber);
    c->add_option("--out-dir", o.out_dir, "Writes real.csv, synth.csv and report.json");
    return c;
}

void run_compare(const CompareOpts& o, Context& ctx) {
    const auto real = load_stream(o.real, o.format, o.sensor);
    const auto synth = load_stream(o.synth, o.format, o.sensor);
    const auto cmp =
        compare_streams(real, synth, o.bins, o.iei_max > 0 ? std::optional<double>(o.iei_max) : std::nullopt);
    const json report = {{"bins", cmp.real.bins},
                         {"iei_max_us", cmp.real.iei_max},
                         {"samples_real", cmp.real.total_samples},
                         {"samples_synth", cmp.synth.total_samples},
                         {"mean_real_us", cmp.mean_real},
                         {"mean_synth_us", cmp.mean_synth},
                         {"mean_ratio", cmp.mean_ratio}};
    if (!o.out_dir.empty()) {
        const fs::path dir(o.out_dir);
        fs::create_directories(dir);
        detail::write_file_text(dir / "real.csv", histogram_csv(cmp.real));
        detail::write_file_text(dir / "synth.csv", histogram_csv(cmp.synth));
        detail::write_json(dir / "report.json", report);
    }
    ctx.out << report.dump() << '\n';
}

// ---------------------------------------------------------------- decompose

struct DecomposeParams {
    double reproj_threshold = 2.0;
    int iterations = 500;
    double second_pass_discard = 0.20;
    double min_flow_mag = 0.5;
    double vis_min = 0.5;
    double conf_min = 0.3;
    std::size_t max_points = 20000;
    double k_mad = 4.0;
    double gate_exponent = 2.0;
    int open_kernel = 3;
    int close_kernel = 7;
    std::size_t min_component = 200;

    DecompositionConfig config(std::uint64_t seed) const {
        DecompositionConfig cfg;
        cfg.ransac = {reproj_threshold, iterations, second_pass_discard, min_flow_mag, vis_min, conf_min, max_points,
                      seed};
        cfg.k_mad = k_mad;
        cfg.gate_exponent = gate_exponent;
        cfg.cleanup = {open_kernel, close_kernel, min_component};
        return cfg;
    }
};

void add_decompose_params(CLI::App* c, DecomposeParams& p) {
    c->add_option("--reproj-threshold", p.reproj_threshold, "RANSAC inlier threshold in pixels");
    c->add_option("--iterations", p.iterations, "RANSAC hypotheses");
    c->add_option("--second-pass-discard", p.second_pass_discard,
                  "Fraction of worst first-pass inliers dropped before the second fit");
    c->add_option("--min-flow-mag", p.min_flow_mag, "Minimum flow magnitude in pixels for fitting samples");
    c->add_option("--vis-min", p.vis_min, "Minimum visibility for fitting samples and the gate");
    c->add_option("--conf-min", p.conf_min, "Minimum confidence for fitting samples");
    c->add_option("--max-points", p.max_points, "Fitting samples cap");
    c->add_option("--k-mad", p.k_mad, "Threshold multiplier: tau = median + k * 1.4826 * MAD");
    c->add_option("--gate-exponent", p.gate_exponent, "Confidence gate exponent");
    c->add_option("--open-kernel", p.open_kernel, "Elliptical opening kernel size");
    c->add_option("--close-kernel", p.close_kernel, "Elliptical closing kernel size");
    c->add_option("--min-component", p.min_component, "Smallest kept connected component in pixels");
}

struct DecomposeOpts {
    std::vector<std::string> flow;
    std::vector<std::string> vis;
    std::vector<std::string> conf;
    std::size_t reference = 0;
    std::uint64_t seed = 0;
    DecomposeParams params;
    std::string out_affine;
    std::string out_mask;
    std::string out_report;
};

CLI::App* add_decompose(CLI::App& app, DecomposeOpts& o) {
    auto* c = app.add_subcommand("decompose", "Split teacher flow into camera and object motion");
    c->add_option("--flow", o.flow, "Flow files (.flo), pooled for the fit")->required()->delimiter(',');
    c->add_option("--vis", o.vis, "Visibility planes, one per flow file")->delimiter(',');
    c->add_option("--conf", o.conf, "Confidence planes, one per flow file")->delimiter(',');
    c->add_option("--reference", o.reference, "Index of the flow frame the mask is built on");
    c->add_option("--seed", o.seed, "Random seed")->required();
    add_decompose_params(c, o.params);
    c->add_option("--out-affine", o.out_affine, "Affine model JSON")->required();
    c->add_option("--out-mask", o.out_mask, "Cleaned object mask (PGM)")->required();
    c->add_option("--out-report", o.out_report, "Fit and threshold report JSON");
    return c;
}

json decomposition_report(const Decomposition& d) {
    return {{"samples", d.samples},
            {"inliers", d.fit.inliers},
            {"kept", d.fit.kept},
            {"degenerate_draws", d.fit.degenerate_draws},
            {"threshold", threshold_json(d.threshold)},
            {"raw_mask_pixels", count_set(d.raw_mask)},
            {"mask_pixels", count_set(d.mask)},
            {"affine", d.fit.model.a}};
}

void run_decompose(const DecomposeOpts& o, Context& ctx) {
    const auto cfg = o.params.config(o.seed);
    const auto frames = load_flow_frames(fs::current_path(), o.flow, o.vis, o.conf);
    const auto d = decompose_flow(frames, o.reference, cfg);
    detail::write_file_text(o.out_affine, affine_to_json(d.fit.model) + "\n");
    write_pgm(o.out_mask, d.mask);
    const auto report = decomposition_report(d);
    if (!o.out_report.empty()) detail::write_json(o.out_report, report);
    ctx.out << report.dump() << '\n';
}

// ---------------------------------------------------------------- crops

struct CropsOpts {
    std::string events;
    std::string format = "auto";
    std::string sensor;
    std::string rgb;
    std::vector<Timestamp> times;
    std::size_t window_events = 300000;
    int patch = 64;
    int top_k = 3;
    int crop_width = 512;
    int crop_height = 384;
    std::string out;
};

CLI::App* add_crops(CLI::App& app, CropsOpts& o) {
    auto* c = app.add_subcommand("crops", "Propose crops at the densest event patches before each start time");
    c->add_option("--events", o.events, "Event file")->required();
    add_event_format(c, o.format, o.sensor);
    c->add_option("--rgb", o.rgb, "RGB frame size WIDTHxHEIGHT")->required();
    c->add_option("--t", o.times, "Start timestamps in microseconds")->required()->delimiter(',');
    c->add_option("--window-events", o.window_events, "Events before each start used for density");
    c->add_option("--patch", o.patch, "Density patch size in event pixels");
    c->add_option("--top-k", o.top_k, "Candidate crops per start");
    c->add_option("--crop-width", o.crop_width, "Crop width in RGB pixels");
    c->add_option("--crop-height", o.crop_height, "Crop height in RGB pixels");
    c->add_option("--out", o.out, "Output JSON");
    return c;
}

void run_crops(const CropsOpts& o, Context& ctx) {
    const auto rgb = *parse_sensor(o.rgb);
    const auto stream = load_stream(o.events, o.format, o.sensor);
    const SensorSize ev{stream.width, stream.height};
    json starts = json::array();
    for (std::size_t i = 0; i < o.times.size(); ++i) {
        const auto window = window_by_count(stream, o.times[i], o.window_events, WindowSide::kBefore);
        const auto top = event_density_topk(window, static_cast<int>(stream.width), static_cast<int>(stream.height),
                                            o.patch, o.top_k);
        json cands = json::array();
        for (const auto& p : top) {
            const auto crop = crop_from_patch(p, o.patch, ev, rgb, o.crop_width, o.crop_height);
            cands.push_back({{"row", p.row}, {"col", p.col}, {"count", p.count}, {"crop", crop_json(crop)}});
        }
        starts.push_back({{"start_index", i}, {"t_us", o.times[i]}, {"candidates", cands}});
    }
    const json result = {{"starts", starts}};
    if (!o.out.empty()) detail::write_json(o.out, result);
    ctx.out << result.dump() << '\n';
}

// ---------------------------------------------------------------- curate

struct CurateOpts {
    std::string manifest;
    std::uint64_t seed = 0;
    DecomposeParams params;
    double min_area = 0.05;
    double temperature = 2.0;
    std::string out_dir;
    unsigned workers = 1;
};

CLI::App* add_curate(CLI::App& app, CurateOpts& o) {
    auto* c = app.add_subcommand("curate", "Decompose candidate crops and build the motion-rich training pool");
    c->add_option("--manifest", o.manifest, "JSON manifest of sequences, starts and crops")->required();
    c->add_option("--seed", o.seed, "Random seed")->required();
    add_decompose_params(c, o.params);
    c->add_option("--min-area", o.min_area, "Minimum object-mask area ratio for acceptance");
    c->add_option("--temperature", o.temperature, "Sequence sampling softmax temperature");
    c->add_option("--out-dir", o.out_dir, "Writes pool.jsonl, stats.json and masks/")->required();
    add_workers(c, o.workers);
    return c;
}

struct CropJob {
    std::size_t sequence = 0;
    std::size_t start = 0;
    std::string name;
    int start_index = 0;
    std::size_t ordinal = 0;
    Crop crop;
    std::size_t reference = 0;
    std::vector<std::string> flow;
    std::vector<std::string> vis;
    std::vector<std::string> conf;
};

std::string mask_file_name(const std::string& sequence, int start_index, std::size_t ordinal) {
    std::string safe = sequence;
    std::replace_if(safe.begin(), safe.end(), [](char c) { return c == '/' || c == '\\'; }, '_');
    return safe + "_s" + std::to_string(start_index) + "_c" + std::to_string(ordinal) + ".pgm";
}

std::vector<std::string> string_list(const json& j, const char* key) {
    if (!j.contains(key)) return {};
    return j.at(key).get<std::vector<std::string>>();
}

void run_curate(const CurateOpts& o, Context& ctx) {
    if (!(o.min_area >= 0.0 && o.min_area <= 1.0)) throw config_error("--min-area must lie in [0, 1]");
    if (!(o.temperature > 0.0)) throw config_error("--temperature must be positive");
    o.params.config(o.seed).ransac.validate();
    const fs::path manifest_path(o.manifest);
    const auto base = manifest_path.parent_path();
    const auto manifest = detail::read_json(manifest_path);

    std::vector<std::string> names;
    std::vector<std::vector<int>> start_indices;
    std::vector<CropJob> jobs;
    try {
        for (const auto& seq : manifest.at("sequences")) {
            const auto si = names.size();
            names.push_back(seq.at("name").get<std::string>());
            start_indices.emplace_back();
            for (const auto& st : seq.at("starts")) {
                const auto sti = start_indices[si].size();
                const int start_index = st.at("start_index").get<int>();
                start_indices[si].push_back(start_index);
                std::size_t ordinal = 0;
                for (const auto& cr : st.at("crops")) {
                    CropJob job;
                    job.sequence = si;
                    job.start = sti;
                    job.name = names[si];
                    job.start_index = start_index;
                    job.ordinal = ordinal++;
                    job.crop = crop_from_json(cr.at("crop"));
                    job.reference = cr.value("reference", std::size_t{0});
                    job.flow = string_list(cr, "flow");
                    job.vis = string_list(cr, "visibility");
                    job.conf = string_list(cr, "confidence");
                    jobs.push_back(std::move(job));
                }
            }
        }
    } catch (const json::exception& e) {
        throw validation_error("bad curation manifest " + o.manifest + ": " + e.what());
    }
    if (names.empty()) throw empty_input_error("curation manifest lists no sequences");

    const fs::path out_dir(o.out_dir);
    fs::create_directories(out_dir / "masks");
    std::vector<CurationDecision> decisions(jobs.size());
    parallel_for(jobs.size(), o.workers, [&](std::size_t i) {
        const auto& job = jobs[i];
        const auto cfg = o.params.config(Rng::derive(o.seed, i));
        const auto frames = load_flow_frames(base, job.flow, job.vis, job.conf);
        Decomposition d;
        try {
            d = decompose_flow(frames, job.reference, cfg);
        } catch (const Error& e) {
            if (!e.is_numeric()) throw;
            decisions[i] = rejected_crop(job.crop, job.name, job.start_index, RejectReason::kDecompositionFailed, e.what());
            return;
        }
        const auto mask_rel = (fs::path("masks") / mask_file_name(job.name, job.start_index, job.ordinal)).string();
        decisions[i] = curate_crop(d.mask, job.crop, job.name, job.start_index, mask_rel, o.min_area);
        if (decisions[i].accepted) write_pgm(out_dir / mask_rel, d.mask);
    });

    std::vector<std::vector<StartCandidates>> starts(names.size());
    for (std::size_t s = 0; s < names.size(); ++s) {
        for (int idx : start_indices[s]) starts[s].push_back({idx, {}});
    }
    std::map<std::string, std::size_t> rejected;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        const auto& d = decisions[i];
        if (!d.accepted) {
            ++rejected[to_string(d.reason)];
            ctx.log.log(LogLevel::kDebug, "crop_rejected",
                        {{"sequence", jobs[i].name}, {"start_index", jobs[i].start_index},
                         {"reason", to_string(d.reason)}, {"detail", d.detail}});
        }
        starts[jobs[i].sequence][jobs[i].start].crops.push_back(d);
    }
    std::vector<CurationEntry> entries;
    std::vector<SequenceStats> stats;
    for (std::size_t s = 0; s < names.size(); ++s) {
        auto pool = build_pool(names[s], starts[s]);
        entries.insert(entries.end(), pool.entries.begin(), pool.entries.end());
        stats.push_back(pool.stats);
    }
    const auto weights = sequence_weights(stats, o.temperature);
    detail::write_file_text(out_dir / "pool.jsonl", pool_to_jsonl(entries));
    detail::write_file_text(out_dir / "stats.json", stats_to_json(stats, weights));
    ctx.out << json{{"sequences", names.size()},
                    {"crops", jobs.size()},
                    {"entries", entries.size()},
                    {"rejected", rejected}}
                   .dump()
            << '\n';
}

// ---------------------------------------------------------------- sample

struct SampleOpts {
    std::string mask;
    std::string crop;
    std::string pool;
    std::size_t num_queries = 0;
    double fraction = 0.9;
    double t_query = 0;
    std::uint64_t seed = 0;
    std::string out;
    std::string out_dir;
    unsigned workers = 1;
};

CLI::App* add_sample(CLI::App& app, SampleOpts& o) {
    auto* c = app.add_subcommand("sample", "Sample motion-aware query points from object masks");
    auto* mask = c->add_option("--mask", o.mask, "Crop-local object mask (PGM)");
    c->add_option("--crop", o.crop, "Crop X,Y,WIDTH,HEIGHT in frame coordinates; defaults to the mask at 0,0")
        ->needs(mask);
    auto* pool = c->add_option("--pool", o.pool, "Pool JSONL; samples every entry at its start index");
    mask->excludes(pool);
    c->add_option("--num-queries", o.num_queries, "Queries per mask")->required()->check(CLI::PositiveNumber);
    c->add_option("--fraction", o.fraction, "Fraction of queries drawn from the object mask")
        ->check(CLI::Range(0.0, 1.0));
    c->add_option("--t-query", o.t_query, "Query time for single-mask mode");
    c->add_option("--seed", o.seed, "Random seed")->required();
    c->add_option("--out", o.out, "Query CSV (single-mask mode)");
    c->add_option("--out-dir", o.out_dir, "Directory for per-entry query CSVs (pool mode)");
    add_workers(c, o.workers);
    return c;
}

json query_summary(const QuerySet& q) {
    return {{"queries", q.points.size()},
            {"object", q.count(QueryOrigin::kObject)},
            {"uniform", q.count(QueryOrigin::kUniform)},
            {"fell_back_to_uniform", q.fell_back_to_uniform}};
}

void run_sample(const SampleOpts& o, Context& ctx) {
    if (o.mask.empty() == o.pool.empty()) throw config_error("give exactly one of --mask or --pool");
    if (!o.mask.empty()) {
        if (o.out.empty()) throw config_error("--out is required with --mask");
        const auto mask = read_pgm(o.mask);
        const Crop crop = o.crop.empty() ? Crop{0, 0, mask.width(), mask.height()} : parse_crop(o.crop);
        Rng rng(o.seed);
        const auto q = sample_queries(mask, crop, o.num_queries, o.fraction, o.t_query, rng);
        detail::write_file_text(o.out, queries_to_csv(q));
        ctx.out << query_summary(q).dump() << '\n';
        return;
    }
    if (o.out_dir.empty()) throw config_error("--out-dir is required with --pool");
    const fs::path pool_path(o.pool);
    const auto entries = pool_from_jsonl(detail::read_file_text(pool_path));
    if (entries.empty()) throw empty_input_error("pool " + o.pool + " has no entries");
    std::vector<SampleJob> jobs;
    jobs.reserve(entries.size());
    for (const auto& e : entries) {
        jobs.push_back({read_pgm(resolve(pool_path.parent_path(), e.mask_path)), e.crop,
                        static_cast<double>(e.start_index)});
    }
    const auto sets = sample_queries_batch(jobs, o.num_queries, o.fraction, o.seed, o.workers);
    const fs::path out_dir(o.out_dir);
    fs::create_directories(out_dir);
    json summary = json::array();
    for (std::size_t i = 0; i < sets.size(); ++i) {
        std::ostringstream name;
        name << "queries_" << std::setw(5) << std::setfill('0') << i << ".csv";
        detail::write_file_text(out_dir / name.str(), queries_to_csv(sets[i]));
        auto s = query_summary(sets[i]);
        s["path"] = (out_dir / name.str()).string();
        summary.push_back(s);
    }
    ctx.out << json{{"entries", summary}}.dump() << '\n';
}

// ---------------------------------------------------------------- evmask

struct EvmaskOpts {
    std::string events;
    std::string format = "auto";
    std::string sensor;
    std::string frames;
    std::string mode = "count";
    std::size_t n_wide = 10000;
    std::size_t n_narrow = 1000;
    Timestamp wide_us = 0;
    Timestamp narrow_us = 0;
    std::string out_dir;
    unsigned workers = 1;
};

CLI::App* add_evmask(CLI::App& app, EvmaskOpts& o) {
    auto* c = app.add_subcommand("evmask", "Event motion masks at frame timestamps");
    c->add_option("--events", o.events, "Event file")->required();
    add_event_format(c, o.format, o.sensor);
    c->add_option("--frames", o.frames, "CSV of frame timestamps (first column t_us)")->required();
    c->add_option("--mode", o.mode, "Window mode")->check(CLI::IsMember({"count", "time"}));
    c->add_option("--n-wide", o.n_wide, "Wide window events per side (count mode)");
    c->add_option("--n-narrow", o.n_narrow, "Narrow window events around the frame (count mode)");
    c->add_option("--wide-us", o.wide_us, "Wide window half-length in microseconds (time mode)");
    c->add_option("--narrow-us", o.narrow_us, "Narrow window half-length in microseconds (time mode)");
    c->add_option("--out-dir", o.out_dir, "Directory for mask_NNNNN.pgm files")->required();
    add_workers(c, o.workers);
    return c;
}

void run_evmask(const EvmaskOpts& o, Context& ctx) {
    MaskWindowConfig cfg;
    cfg.n_wide = o.n_wide;
    cfg.n_narrow = o.n_narrow;
    cfg.mode = o.mode == "time" ? MaskWindowMode::kTimeBased : MaskWindowMode::kCountBased;
    cfg.wide_us = o.wide_us;
    cfg.narrow_us = o.narrow_us;
    cfg.validate();
    const auto times = read_timestamps(o.frames);
    const auto stream = load_stream(o.events, o.format, o.sensor);
    const fs::path out_dir(o.out_dir);
    fs::create_directories(out_dir);
    std::vector<json> outputs(times.size());
    parallel_for(times.size(), o.workers, [&](std::size_t i) {
        const Timestamp prev = i == 0 ? times[0] : times[i - 1];
        const auto mask = event_motion_mask_two_scale(stream, prev, times[i], cfg);
        std::ostringstream name;
        name << "mask_" << std::setw(5) << std::setfill('0') << i << ".pgm";
        write_pgm(out_dir / name.str(), mask);
        outputs[i] = {{"frame", i}, {"t_us", times[i]}, {"path", (out_dir / name.str()).string()},
                      {"pixels", count_set(mask)}};
    });
    ctx.out << json{{"masks", outputs}}.dump() << '\n';
}

// ---------------------------------------------------------------- oats

struct OatsOpts {
    std::string traj;
    std::string masks;
    std::string event_mask;
    std::string scene = "scene";
    std::string model = "model";
    std::string batch;
    std::string out_json;
    std::string out_csv;
    unsigned workers = 1;
};

CLI::App* add_oats(CLI::App& app, OatsOpts& o) {
    auto* c = app.add_subcommand(
        "oats", "Object-adherence tracking score at thresholds 0, 1, 2, 4, 8, 16 px and their mean");
    auto* traj = c->add_option("--traj", o.traj, "Predicted trajectories (TETOTRK1)");
    c->add_option("--masks", o.masks, "Object mask manifest JSON")->needs(traj);
    c->add_option("--event-mask", o.event_mask, "Event motion mask (PGM) restricting evaluated queries");
    c->add_option("--scene", o.scene, "Scene label");
    c->add_option("--model", o.model, "Model label");
    auto* batch = c->add_option("--batch", o.batch, "JSON list of {scene, model, traj, masks, event_mask}");
    traj->excludes(batch);
    c->add_option("--out-json", o.out_json, "Report JSON");
    c->add_option("--out-csv", o.out_csv, "Report CSV");
    add_workers(c, o.workers);
    return c;
}

SceneReport score_scene(const std::string& scene, const std::string& model, const fs::path& traj_path,
                        const fs::path& masks_path, const std::optional<fs::path>& event_mask_path, unsigned workers,
                        Context& ctx) {
    const auto traj = read_tetotrk1(traj_path);
    const auto masks = load_mask_manifest(masks_path);
    std::optional<BinaryMask> event_mask;
    if (event_mask_path) event_mask = read_pgm(*event_mask_path);
    const auto assignment = assign_queries(traj, masks, event_mask ? &*event_mask : nullptr);
    SceneReport r{scene, model, oats_suite(traj, masks, assignment, workers)};
    ctx.log.log(LogLevel::kDebug, "scene_scored",
                {{"scene", scene}, {"model", model}, {"queries_scored", r.report.queries_scored},
                 {"queries_excluded", r.report.queries_excluded}});
    return r;
}

void run_oats(const OatsOpts& o, Context& ctx) {
    std::vector<SceneReport> reports;
    if (!o.batch.empty()) {
        const fs::path batch_path(o.batch);
        const auto base = batch_path.parent_path();
        const auto list = detail::read_json(batch_path);
        if (!list.is_array() || list.empty()) throw validation_error("batch file must be a non-empty JSON array");
        try {
            for (const auto& item : list) {
                std::optional<fs::path> em;
                if (item.contains("event_mask")) em = resolve(base, item.at("event_mask").get<std::string>());
                reports.push_back(score_scene(item.at("scene").get<std::string>(), item.at("model").get<std::string>(),
                                              resolve(base, item.at("traj").get<std::string>()),
                                              resolve(base, item.at("masks").get<std::string>()), em, o.workers, ctx));
            }
        } catch (const json::exception& e) {
            throw validation_error("bad batch file " + o.batch + ": " + e.what());
        }
    } else {
        if (o.traj.empty() || o.masks.empty()) throw config_error("give --traj and --masks, or --batch");
        std::optional<fs::path> em;
        if (!o.event_mask.empty()) em = o.event_mask;
        reports.push_back(score_scene(o.scene, o.model, o.traj, o.masks, em, o.workers, ctx));
    }
    const auto text = oats_json(reports);
    if (!o.out_json.empty()) detail::write_file_text(o.out_json, text + "\n");
    if (!o.out_csv.empty()) detail::write_file_text(o.out_csv, oats_csv(reports));
    ctx.out << text << '\n';
}

// ---------------------------------------------------------------- loss

struct LossOpts {
    std::string pred_tracks;
    std::string pseudo_tracks;
    std::string visibility;
    std::string confidence;
    std::string pred_flow;
    std::string pseudo_flow;
    std::string attn_maps;
    std::string attn_pred;
    std::string attn_target;
    std::string attn_vis;
    std::size_t query_frame = 0;
    std::string attn_maps_bwd;
    std::string attn_pred_bwd;
    std::string attn_target_bwd;
    std::string attn_vis_bwd;
    std::size_t query_frame_bwd = 0;
    double attn_stride = 1.0;
    double attn_offset_x = 0.0;
    double attn_offset_y = 0.0;
    bool attn_logits = false;
    double huber_delta = 1.0;
    double gamma = 0.8;
    double alpha = 1.0;
    double lambda = 0.01;
    double occluded_weight = 0.2;
    double visibility_cut = 0.5;
    double confidence_cut = 0.3;
};

CLI::App* add_loss(CLI::App& app, LossOpts& o) {
    auto* c = app.add_subcommand("loss", "Distillation loss breakdown from raw float32 tensors with shape sidecars");
    c->add_option("--pred-tracks", o.pred_tracks, "Predicted tracks [K, ..., 2]");
    c->add_option("--pseudo-tracks", o.pseudo_tracks, "Pseudo-label tracks [..., 2]");
    c->add_option("--visibility", o.visibility, "Pseudo-label visibility [...]");
    c->add_option("--confidence", o.confidence, "Pseudo-label confidence [...]");
    c->add_option("--pred-flow", o.pred_flow, "Predicted flow [K, H, W, 2]");
    c->add_option("--pseudo-flow", o.pseudo_flow, "Pseudo-label flow [H, W, 2]");
    c->add_option("--attn-maps", o.attn_maps, "Attention maps [T, H, W] reduced by soft argmax");
    c->add_option("--attn-pred", o.attn_pred, "Attention-derived positions [T, 2]");
    c->add_option("--attn-target", o.attn_target, "Target positions [T, 2]");
    c->add_option("--attn-vis", o.attn_vis, "Target visibility [T]");
    c->add_option("--query-frame", o.query_frame, "Query frame excluded from the attention loss");
    c->add_option("--attn-maps-bwd", o.attn_maps_bwd, "Backward attention maps [T, H, W]");
    c->add_option("--attn-pred-bwd", o.attn_pred_bwd, "Backward attention positions [T, 2]");
    c->add_option("--attn-target-bwd", o.attn_target_bwd, "Backward target positions [T, 2]");
    c->add_option("--attn-vis-bwd", o.attn_vis_bwd, "Backward target visibility [T]");
    c->add_option("--query-frame-bwd", o.query_frame_bwd, "Query frame of the backward pass");
    c->add_option("--attn-stride", o.attn_stride, "Attention grid stride in pixels");
    c->add_option("--attn-offset-x", o.attn_offset_x, "Attention grid x offset in pixels");
    c->add_option("--attn-offset-y", o.attn_offset_y, "Attention grid y offset in pixels");
    c->add_flag("--attn-logits", o.attn_logits, "Attention maps hold logits (softmax instead of normalizing)");
    c->add_option("--huber-delta", o.huber_delta, "Huber transition in pixels");
    c->add_option("--gamma", o.gamma, "Iteration decay");
    c->add_option("--alpha", o.alpha, "Trajectory loss weight");
    c->add_option("--lambda", o.lambda, "Flow loss weight");
    c->add_option("--occluded-weight", o.occluded_weight, "Weight of occluded or low-confidence points");
    c->add_option("--visibility-cut", o.visibility_cut, "Visibility threshold for full weight");
    c->add_option("--confidence-cut", o.confidence_cut, "Confidence threshold for full weight");
    return c;
}

Tensor load_tensor(const std::string& path) { return read_tensor(path, sidecar_path(path)); }

std::size_t product(std::span<const std::size_t> dims) {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
}

std::vector<Vec2> as_points(const Tensor& t, std::size_t begin, std::size_t count) {
    std::vector<Vec2> pts(count);
    for (std::size_t i = 0; i < count; ++i) {
        pts[i] = {t.data[(begin + i) * 2], t.data[(begin + i) * 2 + 1]};
    }
    return pts;
}

std::vector<double> as_doubles(const Tensor& t) { return {t.data.begin(), t.data.end()}; }

FlowField flow_from(const Tensor& t, std::size_t offset, std::size_t h, std::size_t w) {
    FlowField f(static_cast<int>(w), static_cast<int>(h));
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const auto i = offset + (y * w + x) * 2;
            f.u(static_cast<int>(x), static_cast<int>(y)) = t.data[i];
            f.v(static_cast<int>(x), static_cast<int>(y)) = t.data[i + 1];
        }
    }
    return f;
}

double track_component(const LossOpts& o, LossConfig cfg) {
    const auto pred = load_tensor(o.pred_tracks);
    const auto pseudo = load_tensor(o.pseudo_tracks);
    if (pred.shape.size() < 2 || pred.shape.back() != 2) throw validation_error("predicted tracks must be [K, ..., 2]");
    if (pseudo.shape.empty() || pseudo.shape.back() != 2) throw validation_error("pseudo tracks must be [..., 2]");
    const std::size_t k = pred.shape.front();
    const std::size_t n = pseudo.element_count() / 2;
    if (pred.element_count() != k * n * 2) throw validation_error("predicted and pseudo track shapes disagree");
    std::vector<double> vis(n, 1.0);
    std::vector<double> conf(n, 1.0);
    if (!o.visibility.empty()) vis = as_doubles(load_tensor(o.visibility));
    if (!o.confidence.empty()) conf = as_doubles(load_tensor(o.confidence));
    std::vector<std::vector<Vec2>> preds;
    for (std::size_t i = 0; i < k; ++i) preds.push_back(as_points(pred, i * n, n));
    const auto target = as_points(pseudo, 0, n);
    cfg.iterations = k;
    return track_loss(preds, target, vis, conf, cfg);
}

double flow_component(const LossOpts& o, LossConfig cfg) {
    const auto pred = load_tensor(o.pred_flow);
    const auto pseudo = load_tensor(o.pseudo_flow);
    if (pred.shape.size() != 4 || pred.shape[3] != 2) throw validation_error("predicted flow must be [K, H, W, 2]");
    if (pseudo.shape.size() != 3 || pseudo.shape[2] != 2) throw validation_error("pseudo flow must be [H, W, 2]");
    const auto k = pred.shape[0];
    const auto h = pseudo.shape[0];
    const auto w = pseudo.shape[1];
    if (pred.shape[1] != h || pred.shape[2] != w) throw validation_error("predicted and pseudo flow shapes disagree");
    std::vector<FlowField> preds;
    for (std::size_t i = 0; i < k; ++i) preds.push_back(flow_from(pred, i * h * w * 2, h, w));
    cfg.iterations = k;
    return flow_loss(preds, flow_from(pseudo, 0, h, w), cfg);
}

std::vector<Vec2> attention_positions(const LossOpts& o, const std::string& maps_path, const std::string& pred_path) {
    if (!pred_path.empty()) {
        const auto t = load_tensor(pred_path);
        if (t.shape.size() != 2 || t.shape[1] != 2) throw validation_error("attention positions must be [T, 2]");
        return as_points(t, 0, t.shape[0]);
    }
    const auto maps = load_tensor(maps_path);
    if (maps.shape.size() != 3) throw validation_error("attention maps must be [T, H, W]");
    const GridGeometry grid{static_cast<int>(maps.shape[2]), static_cast<int>(maps.shape[1]), o.attn_stride,
                            o.attn_offset_x, o.attn_offset_y};
    const auto cells = product(std::span(maps.shape).subspan(1));
    std::vector<Vec2> out;
    for (std::size_t t = 0; t < maps.shape[0]; ++t) {
        std::vector<double> row(maps.data.begin() + static_cast<std::ptrdiff_t>(t * cells),
                                maps.data.begin() + static_cast<std::ptrdiff_t>((t + 1) * cells));
        out.push_back(soft_argmax(row, grid, o.attn_logits ? SoftArgmaxMode::kSoftmax : SoftArgmaxMode::kNormalize));
    }
    return out;
}

double attention_component(const LossOpts& o, const std::string& maps, const std::string& pred,
                           const std::string& target, const std::string& vis, std::size_t query_frame) {
    if (target.empty() || vis.empty()) throw config_error("attention loss needs a target and a visibility tensor");
    const auto p = attention_positions(o, maps, pred);
    const auto tt = load_tensor(target);
    if (tt.shape.size() != 2 || tt.shape[1] != 2) throw validation_error("attention target must be [T, 2]");
    return attention_traj_loss(p, as_points(tt, 0, tt.shape[0]), as_doubles(load_tensor(vis)), query_frame,
                               o.huber_delta);
}

void run_loss(const LossOpts& o, Context& ctx) {
    LossConfig cfg;
    cfg.gamma = o.gamma;
    cfg.alpha = o.alpha;
    cfg.lambda = o.lambda;
    cfg.occluded_weight = o.occluded_weight;
    cfg.visibility_cut = o.visibility_cut;
    cfg.confidence_cut = o.confidence_cut;
    cfg.validate();
    if (o.pred_tracks.empty() != o.pseudo_tracks.empty()) throw config_error("give both --pred-tracks and --pseudo-tracks");
    if (o.pred_flow.empty() != o.pseudo_flow.empty()) throw config_error("give both --pred-flow and --pseudo-flow");
    if (!o.attn_maps.empty() && !o.attn_pred.empty()) throw config_error("give --attn-maps or --attn-pred, not both");
    const bool has_fwd = !o.attn_maps.empty() || !o.attn_pred.empty();
    const bool has_bwd = !o.attn_maps_bwd.empty() || !o.attn_pred_bwd.empty();
    if (o.pred_tracks.empty() && o.pred_flow.empty() && !has_fwd) throw config_error("no loss inputs given");

    json result = {{"track", nullptr}, {"flow", nullptr}, {"total", nullptr}, {"attn", nullptr}};
    double track = 0;
    double flow = 0;
    if (!o.pred_tracks.empty()) result["track"] = track = track_component(o, cfg);
    if (!o.pred_flow.empty()) result["flow"] = flow = flow_component(o, cfg);
    if (!o.pred_tracks.empty() || !o.pred_flow.empty()) result["total"] = total_loss(track, flow, cfg.lambda);
    if (has_fwd) {
        const double fwd =
            attention_component(o, o.attn_maps, o.attn_pred, o.attn_target, o.attn_vis, o.query_frame);
        if (has_bwd) {
            const double bwd = attention_component(o, o.attn_maps_bwd, o.attn_pred_bwd, o.attn_target_bwd,
                                                   o.attn_vis_bwd, o.query_frame_bwd);
            result["attn"] = attention_traj_loss_bidirectional(fwd, bwd);
        } else {
            result["attn"] = fwd;
        }
    }
    ctx.out << result.dump() << '\n';
}

// ---------------------------------------------------------------- warp

struct WarpOpts {
    std::string image;
    std::string flow;
    std::string image1;
    std::string flow1;
    double t_norm = 0.5;
    std::string out;
};

CLI::App* add_warp(CLI::App& app, WarpOpts& o) {
    auto* c = app.add_subcommand("warp", "Backward-warp an image by flow, optionally blending two warped frames");
    c->add_option("--image", o.image, "Image tensor [H, W] or [H, W, C]")->required();
    c->add_option("--flow", o.flow, "Flow (.flo) from the target frame into --image")->required();
    auto* image1 = c->add_option("--image1", o.image1, "Second image tensor for blending");
    auto* flow1 = c->add_option("--flow1", o.flow1, "Flow into --image1");
    image1->needs(flow1);
    flow1->needs(image1);
    c->add_option("--t-norm", o.t_norm, "Normalized time of the target between the two images");
    c->add_option("--out", o.out, "Output tensor; the shape sidecar is written alongside")->required();
    return c;
}

void run_warp(const WarpOpts& o, Context& ctx) {
    const auto input = load_tensor(o.image);
    const auto w0 = backward_warp(image_from_tensor(input), read_flo(o.flow));
    auto out = w0;
    if (!o.image1.empty()) {
        const auto w1 = backward_warp(image_from_tensor(load_tensor(o.image1)), read_flo(o.flow1));
        out = blend_bidirectional(w0, w1, o.t_norm);
    }
    Tensor result = tensor_from_image(out);
    result.shape = input.shape;
    write_tensor(o.out, sidecar_path(o.out), result);
    ctx.out << json{{"path", o.out}, {"shape", result.shape}}.dump() << '\n';
}

// ---------------------------------------------------------------- dispatch

struct Options {
    StackOpts stack;
    IeiOpts iei;
    CompareOpts compare;
    DecomposeOpts decompose;
    CropsOpts crops;
    CurateOpts curate;
    SampleOpts sample;
    EvmaskOpts evmask;
    OatsOpts oats;
    LossOpts loss;
    WarpOpts warp;
};

struct Command {
    CLI::App* app;
    std::function<void(Context&)> run;
};

int exit_code_for(const Error& e) { return e.is_numeric() ? kExitNumeric : kExitInput; }

void report_error(std::ostream& err, const std::string& kind, const std::string& message, int code) {
    err << json{{"level", "error"}, {"kind", kind}, {"message", message}, {"exit", code}}.dump() << '\n';
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    LogLevel level = LogLevel::kInfo;
    try {
        level = log_level_from_env();
    } catch (const Error& e) {
        report_error(err, to_string(e.kind()), e.what(), kExitInput);
        return kExitInput;
    }
    Logger log(err, level);

    CLI::App app{"Event-camera tracking data toolkit", "evkit"};
    app.option_defaults()->always_capture_default();
    app.set_config("--config", "", "TOML or INI file with options; command-line flags take precedence");
    app.allow_config_extras(CLI::config_extras_mode::error);
    app.require_subcommand(1, 1);

    auto opts = std::make_unique<Options>();
    auto& o = *opts;
    const std::vector<Command> commands = {
        {add_stack(app, o.stack), [&](Context& c) { run_stack(o.stack, c); }},
        {add_iei(app, o.iei), [&](Context& c) { run_iei(o.iei, c); }},
        {add_compare(app, o.compare), [&](Context& c) { run_compare(o.compare, c); }},
        {add_decompose(app, o.decompose), [&](Context& c) { run_decompose(o.decompose, c); }},
        {add_crops(app, o.crops), [&](Context& c) { run_crops(o.crops, c); }},
        {add_curate(app, o.curate), [&](Context& c) { run_curate(o.curate, c); }},
        {add_sample(app, o.sample), [&](Context& c) { run_sample(o.sample, c); }},
        {add_evmask(app, o.evmask), [&](Context& c) { run_evmask(o.evmask, c); }},
        {add_oats(app, o.oats), [&](Context& c) { run_oats(o.oats, c); }},
        {add_loss(app, o.loss), [&](Context& c) { run_loss(o.loss, c); }},
        {add_warp(app, o.warp), [&](Context& c) { run_warp(o.warp, c); }},
    };

    std::vector<std::string> argv_store;
    argv_store.reserve(args.size() + 1);
    argv_store.emplace_back("evkit");
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& a : argv_store) argv.push_back(a.data());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        report_error(err, "usage", e.what(), kExitInput);
        return kExitInput;
    }

    Context ctx{out, log};
    for (const auto& cmd : commands) {
        if (!cmd.app->parsed()) continue;
        log.info("config", {{"command", cmd.app->get_name()}, {"resolved", cmd.app->config_to_str(true, false)}});
        try {
            cmd.run(ctx);
        } catch (const Error& e) {
            const int code = exit_code_for(e);
            report_error(err, to_string(e.kind()), e.what(), code);
            return code;
        } catch (const fs::filesystem_error& e) {
            report_error(err, "io", e.what(), kExitInput);
            return kExitInput;
        } catch (const json::exception& e) {
            report_error(err, "parse", e.what(), kExitInput);
            return kExitInput;
        } catch (const std::exception& e) {
            report_error(err, "internal", e.what(), kExitInput);
            return kExitInput;
        }
        return kExitOk;
    }
    return kExitInput;
}

}  // namespace evkit::cli
