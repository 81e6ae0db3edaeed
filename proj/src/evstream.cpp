// Copyright 2026 The evkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "evkit/evstream.hpp"

#include <algorithm>
#include <charconv>
#include <limits>

#include "evkit/error.hpp"
#include "io_util.hpp"

namespace evkit {

namespace {

constexpr char kEvtMagic[8] = {'T', 'E', 'T', 'O', 'E', 'V', 'T', '1'};
constexpr std::size_t kEvtHeaderSize = 8 + 4 + 4 + 8;
constexpr std::size_t kEvtRecordSize = 2 + 2 + 8 + 1;

std::size_t end_of_before(const std::vector<Event>& events, Timestamp t) {
    auto it = std::upper_bound(events.begin(), events.end(), t,
                               [](Timestamp value, const Event& e) { return value < e.t; });
    return static_cast<std::size_t>(it - events.begin());
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

}  // namespace

void validate_events(std::span<const Event> events, std::uint32_t width, std::uint32_t height) {
    for (std::size_t i = 0; i < events.size(); ++i) {
        const auto& e = events[i];
        if (e.x >= width || e.y >= height) {
            throw validation_error("event " + std::to_string(i) + " at (" + std::to_string(e.x) + "," +
                                   std::to_string(e.y) + ") is outside the " + std::to_string(width) +
                                   "x" + std::to_string(height) + " sensor");
        }
        if (e.p != 1 && e.p != -1) {
            throw validation_error("event " + std::to_string(i) + " has polarity " +
                                   std::to_string(e.p) + "; expected -1 or +1");
        }
    }
}

void sort_by_time(std::vector<Event>& events) {
    auto by_t = [](const Event& a, const Event& b) { return a.t < b.t; };
    if (!std::is_sorted(events.begin(), events.end(), by_t)) {
        std::stable_sort(events.begin(), events.end(), by_t);
    }
}

EventFormat guess_event_format(const std::filesystem::path& path) {
    auto ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".csv" ? EventFormat::kCsv : EventFormat::kTetoEvt1;
}

EventStream parse_tetoevt1(std::span<const std::uint8_t> bytes) {
    detail::ByteReader in(bytes);
    auto magic = in.take(8, "magic");
    if (!std::equal(magic.begin(), magic.end(), reinterpret_cast<const std::uint8_t*>(kEvtMagic))) {
        throw ParseError("bad magic; expected TETOEVT1", 0);
    }
    EventStream stream;
    stream.width = in.get<std::uint32_t>("width");
    stream.height = in.get<std::uint32_t>("height");
    const auto count = in.get<std::uint64_t>("count");
    if (count > in.remaining() / kEvtRecordSize) {
        const auto complete = in.remaining() / kEvtRecordSize;
        throw ParseError("header declares " + std::to_string(count) + " records but record " +
                             std::to_string(complete) + " is truncated",
                         kEvtHeaderSize + complete * kEvtRecordSize);
    }
    stream.events.resize(static_cast<std::size_t>(count));
    for (auto& e : stream.events) {
        e.x = in.get<std::uint16_t>("x");
        e.y = in.get<std::uint16_t>("y");
        e.t = in.get<std::int64_t>("t_us");
        const auto p_offset = in.offset();
        e.p = in.get<std::int8_t>("p");
        if (e.p != 1 && e.p != -1) {
            throw ParseError("polarity must be -1 or +1, got " + std::to_string(e.p), p_offset);
        }
    }
    if (in.remaining() != 0) {
        throw ParseError(std::to_string(in.remaining()) + " trailing bytes after last record", in.offset());
    }
    validate_events(stream.events, stream.width, stream.height);
    sort_by_time(stream.events);
    return stream;
}

EventStream parse_events_csv(const std::string& text, SensorSize sensor) {
    EventStream stream;
    stream.width = sensor.width;
    stream.height = sensor.height;

    std::size_t pos = 0;
    bool header_seen = false;
    std::size_t record = 0;
    while (pos < text.size()) {
        const auto line_start = pos;
        auto nl = text.find('\n', pos);
        if (nl == std::string::npos) nl = text.size();
        const auto line = trim(std::string_view(text).substr(pos, nl - pos));
        pos = nl + 1;
        if (line.empty()) continue;
        if (!header_seen) {
            if (line != "x,y,t_us,p") throw ParseError("expected CSV header 'x,y,t_us,p'", line_start);
            header_seen = true;
            continue;
        }

        std::int64_t fields[4];
        std::string_view rest = line;
        for (int f = 0; f < 4; ++f) {
            const auto comma = rest.find(',');
            if ((f < 3) != (comma != std::string_view::npos)) {
                throw ParseError("expected 4 comma-separated fields", line_start);
            }
            const auto field = trim(rest.substr(0, comma));
            const auto field_offset = line_start + static_cast<std::size_t>(field.data() - line.data());
            auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), fields[f]);
            if (ec != std::errc() || ptr != field.data() + field.size() || field.empty()) {
                throw ParseError("invalid integer '" + std::string(field) + "'", field_offset);
            }
            rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
        }
        const auto [x, y, t, p] = fields;
        if (x < 0 || y < 0 || x >= sensor.width || y >= sensor.height) {
            throw validation_error("event " + std::to_string(record) + " at (" + std::to_string(x) + "," +
                                   std::to_string(y) + ") is outside the " + std::to_string(sensor.width) +
                                   "x" + std::to_string(sensor.height) + " sensor");
        }
        if (p != 1 && p != -1) {
            throw ParseError("polarity must be -1 or +1, got " + std::to_string(p), line_start);
        }
        stream.events.push_back({static_cast<std::uint16_t>(x), static_cast<std::uint16_t>(y), t,
                                 static_cast<std::int8_t>(p)});
        ++record;
    }
    if (!header_seen) throw ParseError("missing CSV header 'x,y,t_us,p'", 0);
    sort_by_time(stream.events);
    return stream;
}

EventStream load_events(const std::filesystem::path& path, EventFormat format,
                        std::optional<SensorSize> sensor) {
    if (format == EventFormat::kCsv) {
        if (!sensor) throw config_error("CSV events need an explicit sensor size: " + path.string());
        return parse_events_csv(detail::read_file_text(path), *sensor);
    }
    auto stream = parse_tetoevt1(detail::read_file_bytes(path));
    if (sensor && (sensor->width != stream.width || sensor->height != stream.height)) {
        throw validation_error("sensor size in " + path.string() + " does not match the requested size");
    }
    return stream;
}

std::vector<std::uint8_t> encode_tetoevt1(const EventStream& stream) {
    detail::ByteWriter out;
    out.reserve(kEvtHeaderSize + stream.events.size() * kEvtRecordSize);
    out.put_raw({reinterpret_cast<const std::uint8_t*>(kEvtMagic), 8});
    out.put<std::uint32_t>(stream.width);
    out.put<std::uint32_t>(stream.height);
    out.put<std::uint64_t>(stream.events.size());
    for (const auto& e : stream.events) {
        out.put(e.x);
        out.put(e.y);
        out.put(e.t);
        out.put(e.p);
    }
    return std::move(out.bytes());
}

std::string encode_events_csv(const EventStream& stream) {
    std::string out = "x,y,t_us,p\n";
    for (const auto& e : stream.events) {
        out += std::to_string(e.x) + ',' + std::to_string(e.y) + ',' + std::to_string(e.t) + ',' +
               std::to_string(e.p) + '\n';
    }
    return out;
}

void save_events(const std::filesystem::path& path, const EventStream& stream, EventFormat format) {
    if (format == EventFormat::kCsv) {
        detail::write_file_text(path, encode_events_csv(stream));
    } else {
        detail::write_file_bytes(path, encode_tetoevt1(stream));
    }
}

std::vector<std::string> StackConfig::validate() const {
    if (total_events < 1) throw config_error("stack N must be >= 1, got " + std::to_string(total_events));
    if (bins < 1) throw config_error("stack B must be >= 1, got " + std::to_string(bins));
    if (bins > 62) throw config_error("stack B must be <= 62, got " + std::to_string(bins));
    std::vector<std::string> warnings;
    if (total_events < (std::int64_t{1} << (bins - 1))) {
        warnings.push_back("N=" + std::to_string(total_events) + " < 2^(B-1); small bins are clamped to 1 event");
    }
    return warnings;
}

std::int64_t bin_quota(const StackConfig& cfg, int b) {
    const int shift = cfg.bins - b;
    const std::int64_t q = shift >= 63 ? 0 : (cfg.total_events >> shift);
    return std::max<std::int64_t>(q, 1);
}

std::vector<float> EventStack::to_float() const {
    std::vector<float> out(data.size());
    std::transform(data.begin(), data.end(), out.begin(), [](std::int32_t v) { return static_cast<float>(v); });
    return out;
}

EventStack build_event_stack(const EventStream& stream, Timestamp t, const StackConfig& cfg) {
    cfg.validate();
    EventStack stack;
    stack.width = static_cast<int>(stream.width);
    stack.height = static_cast<int>(stream.height);
    stack.bins = cfg.bins;
    stack.t_ref = t;
    stack.data.assign(static_cast<std::size_t>(stack.width) * static_cast<std::size_t>(stack.height) *
                          static_cast<std::size_t>(cfg.bins),
                      0);

    const std::size_t end = end_of_before(stream.events, t);
    const auto available = static_cast<std::int64_t>(end);
    stack.counts.resize(static_cast<std::size_t>(cfg.bins));
    for (int b = 1; b <= cfg.bins; ++b) {
        stack.counts[static_cast<std::size_t>(b - 1)] = std::min(bin_quota(cfg, b), available);
    }

    // Bins nest: the event k steps back from the newest lands in every bin
    // whose count exceeds k. Walk the segments between consecutive counts so
    // each event is added to exactly the bins that contain it.
    const auto B = static_cast<std::size_t>(cfg.bins);
    const auto W = static_cast<std::size_t>(stack.width);
    std::int64_t done = 0;
    for (std::size_t first_bin = 0; first_bin < B; ++first_bin) {
        const std::int64_t upto = stack.counts[first_bin];
        for (std::int64_t k = done; k < upto; ++k) {
            const Event& e = stream.events[end - 1 - static_cast<std::size_t>(k)];
            std::int32_t* cell = stack.data.data() + (static_cast<std::size_t>(e.y) * W + e.x) * B;
            for (std::size_t b = first_bin; b < B; ++b) cell[b] += e.p;
        }
        done = std::max(done, upto);
    }
    return stack;
}

void write_event_stack(const EventStack& stack, const std::filesystem::path& bin_path,
                       const std::filesystem::path& json_path) {
    const auto values = stack.to_float();
    detail::write_file_bytes(bin_path, detail::encode_f32(values));
    nlohmann::json meta = {{"width", stack.width}, {"height", stack.height}, {"B", stack.bins},
                           {"t_ref", stack.t_ref}, {"counts", stack.counts}};
    detail::write_json(json_path, meta);
}

Grid<std::int32_t> accumulate_polarity(std::span<const Event> events, int width, int height) {
    Grid<std::int32_t> out(width, height, 0);
    for (const auto& e : events) out(e.x, e.y) += e.p;
    return out;
}

std::vector<PatchCount> event_density_topk(std::span<const Event> events, int width, int height, int patch,
                                           int k) {
    if (patch < 1) throw config_error("patch size must be >= 1");
    if (k <= 0 || width <= 0 || height <= 0) return {};
    const int cols = (width + patch - 1) / patch;
    const int rows = (height + patch - 1) / patch;
    std::vector<std::int64_t> counts(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), 0);
    for (const auto& e : events) {
        counts[static_cast<std::size_t>(e.y / patch) * static_cast<std::size_t>(cols) +
               static_cast<std::size_t>(e.x / patch)]++;
    }
    std::vector<std::size_t> nonempty;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        if (counts[i] > 0) nonempty.push_back(i);
    }
    const auto take = std::min(nonempty.size(), static_cast<std::size_t>(k));
    std::partial_sort(nonempty.begin(), nonempty.begin() + static_cast<std::ptrdiff_t>(take), nonempty.end(),
                      [&](std::size_t a, std::size_t b) {
                          return counts[a] != counts[b] ? counts[a] > counts[b] : a < b;
                      });
    std::vector<PatchCount> out;
    out.reserve(take);
    for (std::size_t i = 0; i < take; ++i) {
        const auto cell = nonempty[i];
        out.push_back({static_cast<int>(cell / static_cast<std::size_t>(cols)),
                       static_cast<int>(cell % static_cast<std::size_t>(cols)), counts[cell]});
    }
    return out;
}

std::span<const Event> window_by_count(const EventStream& stream, Timestamp t, std::size_t n, WindowSide side) {
    const std::span<const Event> all(stream.events);
    const std::size_t split = end_of_before(stream.events, t);
    if (side == WindowSide::kBefore) {
        const std::size_t take = std::min(n, split);
        return all.subspan(split - take, take);
    }
    const std::size_t take = std::min(n, all.size() - split);
    return all.subspan(split, take);
}

std::span<const Event> window_by_time(const EventStream& stream, Timestamp begin, Timestamp end) {
    const std::span<const Event> all(stream.events);
    if (end < begin) return {};
    auto lo = std::lower_bound(stream.events.begin(), stream.events.end(), begin,
                               [](const Event& e, Timestamp value) { return e.t < value; });
    const std::size_t first = static_cast<std::size_t>(lo - stream.events.begin());
    const std::size_t last = end_of_before(stream.events, end);
    return all.subspan(first, last > first ? last - first : 0);
}

}  // namespace evkit
