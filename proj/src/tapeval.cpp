// Copyright 2026 The evkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "evkit/tapeval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <thread>

#include "evkit/error.hpp"
#include "evkit/mask.hpp"
#include "io_util.hpp"

namespace evkit {

namespace {

constexpr char kTrackMagic[8] = {'T', 'E', 'T', 'O', 'T', 'R', 'K', '1'};
constexpr int kFar = std::numeric_limits<int>::max();

int isqrt(int v) {
    auto r = static_cast<int>(std::sqrt(static_cast<double>(v)));
    while (r * r > v) --r;
    while ((r + 1) * (r + 1) <= v) ++r;
    return r;
}

// For each pixel, the horizontal distance to the nearest set pixel in the
// same row (kFar if the row is empty). A pixel lies within Euclidean
// distance d of the mask iff some row y + dy, |dy| <= d, has a set pixel
// within isqrt(d^2 - dy^2) columns.
class RowDistance {
public:
    explicit RowDistance(const BinaryMask& mask) : w_(mask.width()), h_(mask.height()), d_(mask.size(), kFar) {
        for (int y = 0; y < h_; ++y) {
            int* row = d_.data() + static_cast<std::size_t>(y) * w_;
            int last = -1;
            for (int x = 0; x < w_; ++x) {
                if (mask(x, y)) last = x;
                if (last >= 0) row[x] = x - last;
            }
            last = -1;
            for (int x = w_ - 1; x >= 0; --x) {
                if (mask(x, y)) last = x;
                if (last >= 0) row[x] = std::min(row[x], last - x);
            }
        }
    }

    bool within(int x, int y, int radius) const {
        const int y0 = std::max(0, y - radius);
        const int y1 = std::min(h_ - 1, y + radius);
        const int r2 = radius * radius;
        for (int yy = y0; yy <= y1; ++yy) {
            const int dy = yy - y;
            if (d_[static_cast<std::size_t>(yy) * w_ + x] <= isqrt(r2 - dy * dy)) return true;
        }
        return false;
    }

private:
    int w_;
    int h_;
    std::vector<int> d_;
};

struct QueryTally {
    std::uint32_t visible = 0;
    std::vector<std::uint32_t> hits;
};

std::vector<QueryTally> tally(const TrajectorySet& traj, const ObjectMaskSequence& masks,
                              const QueryAssignment& assignment, std::span<const int> deltas, unsigned workers) {
    traj.validate();
    if (assignment.object.size() != traj.queries) {
        throw validation_error("assignment covers " + std::to_string(assignment.object.size()) + " queries, expected " +
                               std::to_string(traj.queries));
    }
    for (int d : deltas) {
        if (d < 0) throw config_error("dilation radius must be >= 0");
    }
    const auto n_deltas = deltas.size();
    const auto T = traj.frames;

    // Frames are independent; each worker tallies its own frames into its own
    // integer counters, which are then summed (exact, so order-free).
    auto run_frames = [&](unsigned first, unsigned stride) {
        std::vector<std::uint32_t> visible(traj.queries, 0);
        std::vector<std::uint32_t> hits(static_cast<std::size_t>(traj.queries) * n_deltas, 0);
        for (std::uint32_t t = first; t < T; t += stride) {
            std::map<int, std::optional<RowDistance>> by_object;
            for (std::uint32_t q = 0; q < traj.queries; ++q) {
                const auto& obj = assignment.object[q];
                if (!obj || t == traj.query_frame[q]) continue;
                const auto& p = traj.at(q, t);
                if (p.visibility < 0.5f) continue;
                ++visible[q];
                int px = 0;
                int py = 0;
                if (!rasterize(p.x, p.y, masks.width, masks.height, px, py)) continue;
                auto it = by_object.find(*obj);
                if (it == by_object.end()) {
                    const auto* m = masks.find(t, *obj);
                    it = by_object.emplace(*obj, m ? std::optional<RowDistance>(RowDistance(*m)) : std::nullopt).first;
                }
                if (!it->second) continue;
                for (std::size_t k = 0; k < n_deltas; ++k) {
                    if (it->second->within(px, py, deltas[k])) ++hits[q * n_deltas + k];
                }
            }
        }
        return std::make_pair(std::move(visible), std::move(hits));
    };

    workers = std::clamp(workers, 1u, std::max(1u, T));
    std::vector<std::pair<std::vector<std::uint32_t>, std::vector<std::uint32_t>>> parts(workers);
    if (workers == 1) {
        parts[0] = run_frames(0, 1);
    } else {
        std::vector<std::exception_ptr> errors(workers);
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                try {
                    parts[w] = run_frames(w, workers);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
        for (auto& th : pool) th.join();
        for (auto& e : errors) {
            if (e) std::rethrow_exception(e);
        }
    }

    std::vector<QueryTally> out(traj.queries);
    for (std::uint32_t q = 0; q < traj.queries; ++q) {
        out[q].hits.assign(n_deltas, 0);
        for (const auto& [visible, hits] : parts) {
            out[q].visible += visible[q];
            for (std::size_t k = 0; k < n_deltas; ++k) out[q].hits[k] += hits[q * n_deltas + k];
        }
    }
    return out;
}

// Mean over queries (in query order) of per-query adherence fractions.
std::vector<double> mean_fractions(const std::vector<QueryTally>& tallies, std::size_t n_deltas,
                                   std::size_t& scored) {
    std::vector<double> sums(n_deltas, 0.0);
    scored = 0;
    for (const auto& t : tallies) {
        if (t.visible == 0) continue;
        ++scored;
        for (std::size_t k = 0; k < n_deltas; ++k) sums[k] += static_cast<double>(t.hits[k]) / t.visible;
    }
    if (scored == 0) throw empty_input_error("no evaluated query has a visible frame");
    for (auto& s : sums) s /= static_cast<double>(scored);
    return sums;
}

}  // namespace

BinaryMask dilate_mask(const BinaryMask& mask, int radius) {
    if (radius < 0) throw config_error("dilation radius must be >= 0");
    if (radius == 0) return mask;
    const RowDistance rows(mask);
    BinaryMask out(mask.width(), mask.height(), 0);
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) out(x, y) = rows.within(x, y, radius) ? 1 : 0;
    }
    return out;
}

void TrajectorySet::validate() const {
    if (query_frame.size() != queries || points.size() != static_cast<std::size_t>(queries) * frames) {
        throw validation_error("trajectory arrays do not match N_q x T");
    }
    for (std::uint32_t q = 0; q < queries; ++q) {
        if (query_frame[q] >= frames) {
            throw validation_error("query " + std::to_string(q) + " has query frame " +
                                   std::to_string(query_frame[q]) + " outside [0, " + std::to_string(frames) + ")");
        }
        for (std::uint32_t t = 0; t < frames; ++t) {
            const auto& p = at(q, t);
            if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
                throw validation_error("non-finite position at query " + std::to_string(q) + ", frame " +
                                       std::to_string(t));
            }
            if (!(p.visibility >= 0.0f && p.visibility <= 1.0f)) {
                throw validation_error("visibility outside [0, 1] at query " + std::to_string(q) + ", frame " +
                                       std::to_string(t));
            }
        }
    }
}

TrajectorySet parse_tetotrk1(std::span<const std::uint8_t> bytes) {
    detail::ByteReader in(bytes);
    const auto magic = in.take(sizeof(kTrackMagic), "magic");
    if (!std::equal(magic.begin(), magic.end(), kTrackMagic)) throw ParseError("bad TETOTRK1 magic", 0);
    const auto n_q = in.get<std::uint32_t>("query count");
    const auto n_t = in.get<std::uint32_t>("frame count");
    const auto per_query = 4 + static_cast<std::uint64_t>(n_t) * 12;
    if (static_cast<std::uint64_t>(n_q) * per_query != in.remaining()) {
        throw ParseError("payload holds " + std::to_string(in.remaining()) + " bytes, header implies " +
                             std::to_string(static_cast<std::uint64_t>(n_q) * per_query),
                         in.offset());
    }
    TrajectorySet traj(n_q, n_t);
    for (std::uint32_t q = 0; q < n_q; ++q) {
        traj.query_frame[q] = in.get<std::uint32_t>("query frame");
        for (std::uint32_t t = 0; t < n_t; ++t) {
            auto& p = traj.at(q, t);
            p.x = in.get<float>("x");
            p.y = in.get<float>("y");
            p.visibility = in.get<float>("visibility");
        }
    }
    return traj;
}

std::vector<std::uint8_t> encode_tetotrk1(const TrajectorySet& traj) {
    if (traj.query_frame.size() != traj.queries ||
        traj.points.size() != static_cast<std::size_t>(traj.queries) * traj.frames) {
        throw validation_error("trajectory arrays do not match N_q x T");
    }
    detail::ByteWriter out;
    out.reserve(16 + traj.queries * (4 + static_cast<std::size_t>(traj.frames) * 12));
    out.put_raw({reinterpret_cast<const std::uint8_t*>(kTrackMagic), sizeof(kTrackMagic)});
    out.put(traj.queries);
    out.put(traj.frames);
    for (std::uint32_t q = 0; q < traj.queries; ++q) {
        out.put(traj.query_frame[q]);
        for (std::uint32_t t = 0; t < traj.frames; ++t) {
            const auto& p = traj.at(q, t);
            out.put(p.x);
            out.put(p.y);
            out.put(p.visibility);
        }
    }
    return std::move(out.bytes());
}

TrajectorySet read_tetotrk1(const std::filesystem::path& path) {
    return parse_tetotrk1(detail::read_file_bytes(path));
}

void write_tetotrk1(const std::filesystem::path& path, const TrajectorySet& traj) {
    detail::write_file_bytes(path, encode_tetotrk1(traj));
}

const BinaryMask* ObjectMaskSequence::find(std::size_t frame, int object) const {
    if (frame >= frames.size()) return nullptr;
    const auto it = frames[frame].find(object);
    return it == frames[frame].end() ? nullptr : &it->second;
}

ObjectMaskSequence load_mask_manifest(const std::filesystem::path& manifest_path) {
    const auto j = detail::read_json(manifest_path);
    if (!j.is_object()) throw validation_error(manifest_path.string() + ": manifest must be a JSON object");
    auto parse_key = [&](const std::string& key, const char* what) {
        int v = -1;
        const auto [ptr, ec] = std::from_chars(key.data(), key.data() + key.size(), v);
        if (ec != std::errc{} || ptr != key.data() + key.size() || v < 0) {
            throw validation_error(manifest_path.string() + ": bad " + what + " key '" + key + "'");
        }
        return v;
    };
    const auto base = manifest_path.parent_path();
    ObjectMaskSequence seq;
    bool have_shape = false;
    for (const auto& [frame_key, objects] : j.items()) {
        const auto frame = static_cast<std::size_t>(parse_key(frame_key, "frame"));
        if (!objects.is_object()) {
            throw validation_error(manifest_path.string() + ": frame " + frame_key + " must map object ids to paths");
        }
        if (seq.frames.size() <= frame) seq.frames.resize(frame + 1);
        for (const auto& [id_key, rel] : objects.items()) {
            const int id = parse_key(id_key, "object id");
            if (!rel.is_string()) throw validation_error(manifest_path.string() + ": mask path must be a string");
            auto mask = read_pgm(base / rel.get<std::string>());
            if (!have_shape) {
                seq.width = mask.width();
                seq.height = mask.height();
                have_shape = true;
            } else if (mask.width() != seq.width || mask.height() != seq.height) {
                throw validation_error(rel.get<std::string>() + ": mask size differs from the other masks");
            }
            seq.frames[frame].emplace(id, std::move(mask));
        }
    }
    if (!have_shape) throw empty_input_error(manifest_path.string() + ": manifest lists no masks");
    return seq;
}

bool rasterize(float x, float y, int width, int height, int& px, int& py) {
    const double rx = std::round(static_cast<double>(x));
    const double ry = std::round(static_cast<double>(y));
    if (rx < 0 || ry < 0 || rx >= width || ry >= height) return false;
    px = static_cast<int>(rx);
    py = static_cast<int>(ry);
    return true;
}

QueryAssignment assign_queries(const TrajectorySet& traj, const ObjectMaskSequence& masks,
                               const BinaryMask* event_mask) {
    traj.validate();
    if (event_mask && (event_mask->width() != masks.width || event_mask->height() != masks.height)) {
        throw validation_error("event mask size does not match the object masks");
    }
    QueryAssignment out;
    out.object.assign(traj.queries, std::nullopt);
    std::map<std::pair<std::uint32_t, int>, std::size_t> areas;
    for (std::uint32_t q = 0; q < traj.queries; ++q) {
        const auto t = traj.query_frame[q];
        const auto& p = traj.at(q, t);
        int px = 0;
        int py = 0;
        if (!rasterize(p.x, p.y, masks.width, masks.height, px, py)) continue;
        if (event_mask && !(*event_mask)(px, py)) continue;
        if (t >= masks.frames.size()) continue;
        std::optional<int> best;
        std::size_t best_area = 0;
        for (const auto& [id, m] : masks.frames[t]) {
            if (!m(px, py)) continue;
            auto [it, fresh] = areas.try_emplace({t, id}, 0);
            if (fresh) it->second = count_set(m);
            // Ids iterate in increasing order, so a strict comparison keeps the
            // smallest id among equal areas.
            if (!best || it->second < best_area) {
                best = id;
                best_area = it->second;
            }
        }
        if (best) {
            out.object[q] = best;
            ++out.evaluable;
        }
    }
    if (out.evaluable == 0) throw empty_input_error("no adherent queries");
    return out;
}

double oats_average(std::span<const double, 6> scores) {
    double sum = 0;
    for (double s : scores) sum += s;
    return sum / 6.0;
}

double oats_delta(const TrajectorySet& traj, const ObjectMaskSequence& masks, const QueryAssignment& assignment,
                  int delta, unsigned workers) {
    const int deltas[1] = {delta};
    std::size_t scored = 0;
    return mean_fractions(tally(traj, masks, assignment, deltas, workers), 1, scored)[0];
}

OatsReport oats_suite(const TrajectorySet& traj, const ObjectMaskSequence& masks, const QueryAssignment& assignment,
                      unsigned workers) {
    const auto tallies = tally(traj, masks, assignment, kOatsThresholds, workers);
    OatsReport r;
    const auto means = mean_fractions(tallies, kOatsThresholds.size(), r.queries_scored);
    std::copy(means.begin(), means.end(), r.scores.begin());
    r.average = oats_average(r.scores);
    for (std::uint32_t q = 0; q < traj.queries; ++q) {
        if (!assignment.object[q]) continue;
        if (tallies[q].visible == 0) {
            ++r.queries_excluded;
        } else {
            r.frames_evaluated += tallies[q].visible;
        }
    }
    return r;
}

std::string oats_csv(std::span<const SceneReport> scenes) {
    std::ostringstream out;
    out << "scene,model";
    for (int d : kOatsThresholds) out << ",oats_" << d;
    out << ",oats_avg\n";
    out << std::fixed << std::setprecision(4);
    for (const auto& s : scenes) {
        out << s.scene << ',' << s.model;
        for (double v : s.report.scores) out << ',' << v;
        out << ',' << s.report.average << '\n';
    }
    return out.str();
}

std::string oats_json(std::span<const SceneReport> scenes) {
    auto report_json = [](const OatsReport& r) {
        nlohmann::json per_delta = nlohmann::json::object();
        for (std::size_t k = 0; k < kOatsThresholds.size(); ++k) {
            per_delta[std::to_string(kOatsThresholds[k])] = r.scores[k];
        }
        return nlohmann::json{{"oats", per_delta},
                              {"average", r.average},
                              {"queries_scored", r.queries_scored},
                              {"queries_excluded", r.queries_excluded},
                              {"frames_evaluated", r.frames_evaluated}};
    };
    nlohmann::json arr = nlohmann::json::array();
    OatsReport pooled;
    std::array<double, 6> weighted{};
    for (const auto& s : scenes) {
        auto j = report_json(s.report);
        j["scene"] = s.scene;
        j["model"] = s.model;
        arr.push_back(std::move(j));
        for (std::size_t k = 0; k < 6; ++k) {
            weighted[k] += s.report.scores[k] * static_cast<double>(s.report.queries_scored);
        }
        pooled.queries_scored += s.report.queries_scored;
        pooled.queries_excluded += s.report.queries_excluded;
        pooled.frames_evaluated += s.report.frames_evaluated;
    }
    nlohmann::json out = {{"scenes", arr}};
    if (pooled.queries_scored > 0) {
        // Each scene score is a mean over its queries, so weighting by query
        // count gives the mean over all queries.
        for (std::size_t k = 0; k < 6; ++k) {
            pooled.scores[k] = weighted[k] / static_cast<double>(pooled.queries_scored);
        }
        pooled.average = oats_average(pooled.scores);
        out["overall"] = report_json(pooled);
    }
    return out.dump(2) + "\n";
}

}  // namespace evkit
