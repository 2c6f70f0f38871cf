#include "dmpead/ensemble.hpp"

#include "dmpead/detect_eval.hpp"
#include "dmpead/error.hpp"
#include "dmpead/random.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numeric>

namespace dmpead {

void ScoreMatrix::validate() const {
    if (model_ids.size() != scores.rows()) throw ShapeError("score matrix row count does not match model ids");
    for (double v : scores.data()) {
        if (!std::isfinite(v) || v < 0.0) throw DataError("score matrix entries must be finite and >= 0");
    }
}

void RankTable::validate() const {
    const std::size_t n = model_ids.size();
    for (const auto& r : rankings) {
        if (r.order.size() != n) throw DataError("ranking " + r.metric + " is not a permutation of the subset");
        std::vector<std::uint8_t> seen(n, 0);
        for (auto i : r.order) {
            if (i >= n || seen[i]) throw DataError("ranking " + r.metric + " is not a permutation of the subset");
            seen[i] = 1;
        }
    }
}

std::vector<double> score_row(const ReconModel& model, const TimeSeries& ts, std::size_t stride) {
    return pointwise_error(ts.values, reconstruct(model, ts, stride));
}

ScoreMatrix score_models(std::span<const ReconModel> subset, const TimeSeries& ts, std::size_t stride) {
    if (subset.empty()) throw DataError("cannot score an empty model subset");
    ScoreMatrix out;
    out.scores = Matrix(subset.size(), ts.length());
    for (std::size_t i = 0; i < subset.size(); ++i) {
        out.model_ids.push_back(subset[i].id);
        const auto row = score_row(subset[i], ts, stride);
        std::copy(row.begin(), row.end(), out.scores.row(i).begin());
    }
    return out;
}

std::vector<std::size_t> rank_by(std::span<const double> keys, bool descending) {
    std::vector<std::size_t> order(keys.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return descending ? keys[a] > keys[b] : keys[a] < keys[b];
    });
    return order;
}

PredictionErrors prediction_errors(const Matrix& x, const Matrix& xhat) {
    if (x.rows() != xhat.rows() || x.cols() != xhat.cols()) throw ShapeError("prediction error shape mismatch");
    PredictionErrors e;
    const auto& a = x.data();
    const auto& b = xhat.data();
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double diff = std::abs(b[i] - a[i]);
        e.mse += diff * diff;
        e.mae += diff;
        e.mape += diff / std::max(std::abs(a[i]), kMapeFloor);
    }
    const double count = static_cast<double>(a.size());
    e.mse /= count;
    e.mae /= count;
    e.mape /= count;
    e.rmse = std::sqrt(e.mse);
    return e;
}

std::vector<Ranking> rank_prediction_error(std::span<const PredictionErrors> errors) {
    auto ranking = [&](const char* name, double PredictionErrors::*member) {
        std::vector<double> keys;
        for (const auto& e : errors) keys.push_back(e.*member);
        return Ranking{name, rank_by(keys, false)};
    };
    return {ranking("mse", &PredictionErrors::mse), ranking("mae", &PredictionErrors::mae),
            ranking("rmse", &PredictionErrors::rmse), ranking("mape", &PredictionErrors::mape)};
}

std::vector<Ranking> rank_prediction_error(std::span<const ReconModel> subset, const TimeSeries& ts,
                                           std::size_t stride) {
    std::vector<PredictionErrors> errors;
    for (const auto& model : subset) errors.push_back(prediction_errors(ts.values, reconstruct(model, ts, stride)));
    return rank_prediction_error(errors);
}

namespace {

double synthetic_magnitude(AnomalyKind kind) {
    switch (kind) {
        case AnomalyKind::spike: return 5.0;
        case AnomalyKind::contextual: return 3.0;
        default: return 1.0;
    }
}

}  // namespace

std::vector<TimeSeries> synthetic_copies(const TimeSeries& ts, std::uint64_t seed) {
    const std::size_t m = ts.length();
    std::vector<TimeSeries> copies;
    if (m < kMinSyntheticLength || ts.dims() == 0) return copies;
    const std::size_t slot = m / kSyntheticInstances;
    for (std::size_t k = 0; k < std::size(kAllAnomalyKinds); ++k) {
        const AnomalyKind kind = kAllAnomalyKinds[k];
        Rng rng(mix_seed(seed, k));
        TimeSeries copy = ts;
        copy.labels.emplace(m, std::uint8_t{0});
        const std::size_t len = kind == AnomalyKind::spike ? 1 : std::min<std::size_t>(32, m / 20);
        for (std::size_t inst = 0; inst < kSyntheticInstances; ++inst) {
            AnomalySpec spec;
            spec.kind = kind;
            spec.length = len;
            spec.magnitude = synthetic_magnitude(kind);
            spec.start = inst * slot + static_cast<std::size_t>(rng.below(slot - len + 1));
            spec.dims = {static_cast<std::size_t>(rng.below(ts.dims()))};
            copy = inject_anomaly(copy, spec);
        }
        copies.push_back(std::move(copy));
    }
    return copies;
}

std::vector<Ranking> rank_synthetic(std::span<const ReconModel> subset, const TimeSeries& ts, std::size_t stride,
                                    std::uint64_t seed, std::vector<std::string>* warnings) {
    std::vector<Ranking> out;
    const auto copies = synthetic_copies(ts, seed);
    if (copies.empty()) {
        if (warnings) {
            warnings->push_back("series shorter than " + std::to_string(kMinSyntheticLength) +
                                " points: synthetic-anomaly rankings skipped");
        }
        return out;
    }
    for (std::size_t k = 0; k < copies.size(); ++k) {
        std::vector<double> skill;
        for (const auto& model : subset) skill.push_back(auc_pr(score_row(model, copies[k], stride), *copies[k].labels));
        out.push_back({"synthetic_" + std::string(to_string(kAllAnomalyKinds[k])), rank_by(skill, true)});
    }
    return out;
}

Matrix z_normalize_rows(const Matrix& scores) {
    Matrix out(scores.rows(), scores.cols());
    const double m = static_cast<double>(scores.cols());
    for (std::size_t i = 0; i < scores.rows(); ++i) {
        const auto row = scores.row(i);
        const double mean = std::accumulate(row.begin(), row.end(), 0.0) / m;
        double acc = 0.0;
        for (double v : row) acc += (v - mean) * (v - mean);
        const double sd = std::sqrt(acc / m);
        if (!(sd > 0.0)) continue;
        for (std::size_t j = 0; j < row.size(); ++j) out(i, j) = (row[j] - mean) / sd;
    }
    return out;
}

Matrix pairwise_distances(const Matrix& rows) {
    const std::size_t n = rows.rows();
    Matrix d(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            double acc = 0.0;
            const auto a = rows.row(i);
            const auto b = rows.row(j);
            for (std::size_t c = 0; c < a.size(); ++c) acc += (a[c] - b[c]) * (a[c] - b[c]);
            d(i, j) = d(j, i) = std::sqrt(acc);
        }
    }
    return d;
}

std::vector<std::size_t> nearest_neighbor_ranking(const Matrix& dist) {
    const std::size_t n = dist.rows();
    std::vector<double> nearest(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) best = std::min(best, dist(i, j));
        }
        nearest[i] = n > 1 ? best : 0.0;
    }
    return rank_by(nearest, false);
}

namespace {

double medoid_cost(const Matrix& dist, const std::vector<std::size_t>& medoids) {
    double total = 0.0;
    for (std::size_t i = 0; i < dist.rows(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (auto m : medoids) best = std::min(best, dist(i, m));
        total += best;
    }
    return total;
}

// Larger clusters come first; inside a cluster the centre leads and the
// members follow by distance to it.
std::vector<std::size_t> cluster_ranking(const Matrix& dist, std::span<const std::size_t> centres) {
    const std::size_t n = dist.rows();
    const std::size_t k = centres.size();
    std::vector<std::size_t> cluster(n);
    std::vector<double> to_centre(n);
    std::vector<std::size_t> size(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t best = 0;
        for (std::size_t s = 1; s < k; ++s) {
            if (dist(i, centres[s]) < dist(i, centres[best])) best = s;
        }
        cluster[i] = best;
        to_centre[i] = i == centres[best] ? -1.0 : dist(i, centres[best]);
        ++size[best];
    }
    std::vector<std::size_t> slots(k);
    std::iota(slots.begin(), slots.end(), std::size_t{0});
    std::stable_sort(slots.begin(), slots.end(), [&](std::size_t a, std::size_t b) {
        if (size[a] != size[b]) return size[a] > size[b];
        return centres[a] < centres[b];
    });
    std::vector<std::size_t> order;
    for (std::size_t s : slots) {
        std::vector<std::size_t> members;
        std::vector<double> key;
        for (std::size_t i = 0; i < n; ++i) {
            if (cluster[i] != s) continue;
            members.push_back(i);
            key.push_back(to_centre[i]);
        }
        for (std::size_t j : rank_by(key, false)) order.push_back(members[j]);
    }
    return order;
}

}  // namespace

std::vector<std::size_t> kmedoids_ranking(const Matrix& dist, std::uint64_t seed) {
    const std::size_t n = dist.rows();
    if (n < 2) return std::vector<std::size_t>(n, 0);
    const std::size_t k = std::min<std::size_t>(2, n - 1);
    Rng rng(seed);
    std::vector<std::size_t> medoids = rng.sample_without_replacement(n, k);
    double cost = medoid_cost(dist, medoids);

    // PAM swap phase: apply the best strictly improving swap until none is left.
    for (std::size_t iter = 0; iter < 100; ++iter) {
        double best_cost = cost;
        std::size_t best_slot = k;
        std::size_t best_point = 0;
        for (std::size_t s = 0; s < k; ++s) {
            for (std::size_t o = 0; o < n; ++o) {
                if (std::find(medoids.begin(), medoids.end(), o) != medoids.end()) continue;
                auto trial = medoids;
                trial[s] = o;
                const double c = medoid_cost(dist, trial);
                if (c < best_cost) {
                    best_cost = c;
                    best_slot = s;
                    best_point = o;
                }
            }
        }
        if (best_slot == k) break;
        medoids[best_slot] = best_point;
        cost = best_cost;
    }
    // Among equal-cost medoid choices prefer the earliest model.
    bool moved = true;
    while (moved) {
        moved = false;
        for (std::size_t s = 0; s < k && !moved; ++s) {
            for (std::size_t o = 0; o < medoids[s]; ++o) {
                if (std::find(medoids.begin(), medoids.end(), o) != medoids.end()) continue;
                auto trial = medoids;
                trial[s] = o;
                if (medoid_cost(dist, trial) <= cost) {
                    medoids = trial;
                    cost = medoid_cost(dist, medoids);
                    moved = true;
                    break;
                }
            }
        }
    }

    return cluster_ranking(dist, medoids);
}

std::vector<std::size_t> affinity_propagation_ranking(const Matrix& dist) {
    const std::size_t n = dist.rows();
    if (n < 2) return std::vector<std::size_t>(n, 0);
    constexpr double kDamping = 0.7;
    constexpr std::size_t kIterations = 200;
    constexpr std::size_t kStableIterations = 15;

    Matrix s(n, n);
    std::vector<double> off_diagonal;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < n; ++k) {
            if (i == k) continue;
            s(i, k) = -dist(i, k) * dist(i, k);
            off_diagonal.push_back(s(i, k));
        }
    }
    std::sort(off_diagonal.begin(), off_diagonal.end());
    const std::size_t half = off_diagonal.size() / 2;
    const double preference = off_diagonal.size() % 2 == 1 ? off_diagonal[half]
                                                            : (off_diagonal[half - 1] + off_diagonal[half]) / 2.0;
    for (std::size_t i = 0; i < n; ++i) s(i, i) = preference;

    Matrix r(n, n);
    Matrix a(n, n);
    std::vector<std::uint8_t> exemplars(n, 0);
    std::vector<std::uint8_t> previous;
    std::size_t stable = 0;
    bool converged = false;
    for (std::size_t it = 0; it < kIterations; ++it) {
        for (std::size_t i = 0; i < n; ++i) {
            double first = -std::numeric_limits<double>::infinity();
            double second = first;
            std::size_t first_k = 0;
            for (std::size_t k = 0; k < n; ++k) {
                const double v = a(i, k) + s(i, k);
                if (v > first) {
                    second = first;
                    first = v;
                    first_k = k;
                } else if (v > second) {
                    second = v;
                }
            }
            for (std::size_t k = 0; k < n; ++k) {
                const double fresh = s(i, k) - (k == first_k ? second : first);
                r(i, k) = kDamping * r(i, k) + (1.0 - kDamping) * fresh;
            }
        }
        for (std::size_t k = 0; k < n; ++k) {
            double positive = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (i != k) positive += std::max(0.0, r(i, k));
            }
            for (std::size_t i = 0; i < n; ++i) {
                double fresh;
                if (i == k) {
                    fresh = positive;
                } else {
                    fresh = std::min(0.0, r(k, k) + positive - std::max(0.0, r(i, k)));
                }
                a(i, k) = kDamping * a(i, k) + (1.0 - kDamping) * fresh;
            }
        }
        bool any = false;
        for (std::size_t k = 0; k < n; ++k) {
            exemplars[k] = a(k, k) + r(k, k) > 0.0 ? 1 : 0;
            any = any || exemplars[k];
        }
        if (any && exemplars == previous) {
            if (++stable >= kStableIterations) {
                converged = true;
                break;
            }
        } else {
            stable = 0;
        }
        previous = exemplars;
    }
    if (!converged) return {};

    std::vector<std::size_t> centres;
    for (std::size_t k = 0; k < n; ++k) {
        if (exemplars[k]) centres.push_back(k);
    }
    // Refinement: each cluster's exemplar becomes the member with the largest
    // summed similarity to the rest of its cluster.
    std::vector<std::size_t> owner(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < centres.size(); ++c) {
            if (s(i, centres[c]) > s(i, centres[best])) best = c;
        }
        owner[i] = best;
    }
    for (std::size_t c = 0; c < centres.size(); ++c) owner[centres[c]] = c;
    for (std::size_t c = 0; c < centres.size(); ++c) {
        double best_total = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) {
            if (owner[j] != c) continue;
            double total = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (owner[i] == c) total += s(i, j);
            }
            if (total > best_total) {
                best_total = total;
                centres[c] = j;
            }
        }
    }
    std::sort(centres.begin(), centres.end());
    return cluster_ranking(dist, centres);
}

std::vector<std::size_t> farthest_first_ranking(const Matrix& dist) {
    const std::size_t n = dist.rows();
    if (n < 2) return std::vector<std::size_t>(n, 0);
    // Ties pick the later model so that, after reversal, earlier models rank first.
    std::size_t pa = 0;
    std::size_t pb = 1;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (dist(i, j) >= dist(pa, pb)) {
                pa = i;
                pb = j;
            }
        }
    }
    auto total = [&](std::size_t i) {
        double t = 0.0;
        for (std::size_t j = 0; j < n; ++j) t += dist(i, j);
        return t;
    };
    std::vector<std::size_t> picked;
    if (total(pa) > total(pb)) {
        picked = {pa, pb};
    } else {
        picked = {pb, pa};
    }
    std::vector<std::uint8_t> used(n, 0);
    used[pa] = used[pb] = 1;
    std::vector<double> min_dist(n, std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < n; ++i) min_dist[i] = std::min(dist(i, pa), dist(i, pb));
    while (picked.size() < n) {
        std::size_t best = n;
        for (std::size_t i = 0; i < n; ++i) {
            if (used[i]) continue;
            if (best == n || min_dist[i] >= min_dist[best]) best = i;
        }
        used[best] = 1;
        picked.push_back(best);
        for (std::size_t i = 0; i < n; ++i) min_dist[i] = std::min(min_dist[i], dist(i, best));
    }
    std::reverse(picked.begin(), picked.end());
    return picked;
}

std::vector<Ranking> rank_centrality(const ScoreMatrix& scores, std::uint64_t seed,
                                     std::vector<std::string>* warnings) {
    if (scores.model_count() < 2) throw DataError("centrality rankings need at least 2 models");
    const Matrix dist = pairwise_distances(z_normalize_rows(scores.scores));
    std::vector<Ranking> out;
    const auto nn = nearest_neighbor_ranking(dist);
    out.push_back({"nearest_neighbor", nn});
    out.push_back({"k_medoids", kmedoids_ranking(dist, seed)});
    auto ap = affinity_propagation_ranking(dist);
    if (ap.empty()) {
        if (warnings) warnings->push_back("affinity propagation did not converge: nearest-neighbour ranking used");
        ap = nn;
    }
    out.push_back({"affinity_propagation", std::move(ap)});
    out.push_back({"farthest_first", farthest_first_ranking(dist)});
    return out;
}

std::vector<double> min_max_normalize(std::span<const double> row) {
    std::vector<double> out(row.size(), 0.0);
    if (row.empty()) return out;
    const auto [lo, hi] = std::minmax_element(row.begin(), row.end());
    const double range = *hi - *lo;
    if (!(range > 0.0)) return out;
    for (std::size_t i = 0; i < row.size(); ++i) out[i] = (row[i] - *lo) / range;
    return out;
}

std::vector<double> borda_points(const RankTable& table) {
    table.validate();
    const std::size_t n = table.model_ids.size();
    std::vector<double> points(n, 0.0);
    for (const auto& r : table.rankings) {
        for (std::size_t p = 0; p < r.order.size(); ++p) points[r.order[p]] += static_cast<double>(n - p);
    }
    return points;
}

namespace {

std::vector<double> average_normalized(const Matrix& scores, std::span<const std::size_t> rows) {
    std::vector<double> out(scores.cols(), 0.0);
    for (auto i : rows) {
        const auto norm = min_max_normalize(scores.row(i));
        for (std::size_t j = 0; j < out.size(); ++j) out[j] += norm[j];
    }
    for (double& v : out) v /= static_cast<double>(rows.size());
    return out;
}

}  // namespace

BordaResult borda_topk(const RankTable& table, const Matrix& scores, std::size_t k) {
    const std::size_t n = table.model_ids.size();
    if (n == 0) throw DataError("Borda aggregation needs at least one model");
    if (k == 0) throw UsageError("k must be >= 1");
    if (scores.rows() != n) throw ShapeError("score matrix does not match the rank table");
    BordaResult out;
    if (k >= n) {
        out.selected.resize(n);
        std::iota(out.selected.begin(), out.selected.end(), std::size_t{0});
    } else {
        out.points = borda_points(table);
        auto order = rank_by(out.points, true);
        order.resize(k);
        out.selected = std::move(order);
    }
    out.final_scores = average_normalized(scores, out.selected);
    return out;
}

void EnsembleSpec::validate() const {
    if (k < 1) throw UsageError("k must be >= 1");
}

EnsembleResult run_ensemble(std::span<const ReconModel> subset, const TimeSeries& ts, std::size_t stride,
                            const EnsembleSpec& spec) {
    spec.validate();
    if (subset.empty()) throw DataError("cannot ensemble an empty model subset");
    EnsembleResult out;
    out.scores.scores = Matrix(subset.size(), ts.length());
    std::vector<PredictionErrors> errors;
    for (std::size_t i = 0; i < subset.size(); ++i) {
        out.scores.model_ids.push_back(subset[i].id);
        const Matrix xhat = reconstruct(subset[i], ts, stride);
        const auto row = pointwise_error(ts.values, xhat);
        std::copy(row.begin(), row.end(), out.scores.scores.row(i).begin());
        errors.push_back(prediction_errors(ts.values, xhat));
    }
    out.table.model_ids = out.scores.model_ids;
    if (spec.k < subset.size()) {
        for (auto& r : rank_prediction_error(errors)) out.table.rankings.push_back(std::move(r));
        for (auto& r : rank_synthetic(subset, ts, stride, mix_seed(spec.seed, 1), &out.warnings)) {
            out.table.rankings.push_back(std::move(r));
        }
        for (auto& r : rank_centrality(out.scores, mix_seed(spec.seed, 2), &out.warnings)) {
            out.table.rankings.push_back(std::move(r));
        }
    }
    auto borda = borda_topk(out.table, out.scores.scores, spec.k);
    out.selected = std::move(borda.selected);
    out.points = std::move(borda.points);
    out.scores.final_scores = std::move(borda.final_scores);
    return out;
}

namespace {

void append_number(std::string& out, double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    out.append(buf, res.ptr);
}

}  // namespace

std::string format_rank_table_csv(const RankTable& table) {
    std::string out = "metric,model,position\n";
    for (const auto& r : table.rankings) {
        for (std::size_t p = 0; p < r.order.size(); ++p) {
            out += r.metric + "," + table.model_ids[r.order[p]] + "," + std::to_string(p + 1) + "\n";
        }
    }
    return out;
}

std::string format_score_csv(const ScoreMatrix& scores) {
    std::string out = "t";
    for (const auto& id : scores.model_ids) out += "," + id;
    if (!scores.final_scores.empty()) out += ",final";
    out += "\n";
    for (std::size_t t = 0; t < scores.length(); ++t) {
        out += std::to_string(t);
        for (std::size_t i = 0; i < scores.model_count(); ++i) {
            out += ",";
            append_number(out, scores.scores(i, t));
        }
        if (!scores.final_scores.empty()) {
            out += ",";
            append_number(out, scores.final_scores[t]);
        }
        out += "\n";
    }
    return out;
}

}  // namespace dmpead
