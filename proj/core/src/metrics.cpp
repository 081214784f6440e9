#include "gssl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>

#include "gssl/rng.hpp"

namespace gssl {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_records(std::span<const PixelRecord> records, const char* op) {
    if (records.empty()) throw std::invalid_argument(std::string(op) + ": empty records");
}

CurvePoint make_point(double threshold, const Confusion& c, double beta) {
    CurvePoint p;
    p.threshold = threshold;
    p.counts = c;
    const auto d = [](std::size_t num, std::size_t den, double fallback) {
        return den == 0 ? fallback : static_cast<double>(num) / static_cast<double>(den);
    };
    p.precision = d(c.tp, c.tp + c.fp, 1.0);
    p.recall = d(c.tp, c.tp + c.fn, 0.0);
    p.tpr = p.recall;
    p.fpr = d(c.fp, c.fp + c.tn, 0.0);
    p.f_beta = (c.tp + c.fp + c.fn) == 0 ? 0.0 : f_beta(c.tp, c.fp, c.fn, beta);
    const auto md = a_md_and_pac(c);
    p.a_md = md.a_md;
    p.p_ac = md.p_ac;
    return p;
}

bool better(double value, double p_ac, const CurvePoint& best, double best_value) {
    return value > best_value || (value == best_value && p_ac > best.p_ac);
}

}  // namespace

Confusion confusion_at_threshold(std::span<const PixelRecord> records, double threshold) {
    require_records(records, "confusion_at_threshold");
    Confusion c;
    for (const auto& r : records) {
        const bool certain = r.score < threshold;
        if (r.accurate) {
            certain ? ++c.tp : ++c.fn;
        } else {
            certain ? ++c.fp : ++c.tn;
        }
    }
    return c;
}

double f_beta(std::size_t tp, std::size_t fp, std::size_t fn, double beta) {
    if (!(beta > 0.0)) throw std::invalid_argument("f_beta: beta must be > 0");
    if (tp + fp + fn == 0) throw std::invalid_argument("f_beta: all counts are zero");
    const double b2 = beta * beta;
    const double num = (1.0 + b2) * static_cast<double>(tp);
    return num / (num + static_cast<double>(fp) + b2 * static_cast<double>(fn));
}

MdAccuracy a_md_and_pac(const Confusion& c) {
    const std::size_t n = c.total();
    if (n == 0) throw std::invalid_argument("a_md_and_pac: no pixels");
    return {static_cast<double>(c.tp + c.tn) / static_cast<double>(n),
            static_cast<double>(c.tp) / static_cast<double>(n)};
}

CurvePoint evaluate_threshold(std::span<const PixelRecord> records, double threshold, double beta) {
    return make_point(threshold, confusion_at_threshold(records, threshold), beta);
}

SweepSummary sweep(std::span<const PixelRecord> records, double beta) {
    require_records(records, "sweep");
    if (!(beta > 0.0)) throw std::invalid_argument("sweep: beta must be > 0");
    for (const auto& r : records) {
        if (!std::isfinite(r.score)) throw std::invalid_argument("sweep: non-finite score");
    }
    std::vector<PixelRecord> sorted(records.begin(), records.end());
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const PixelRecord& a, const PixelRecord& b) { return a.score < b.score; });
    std::size_t positives = 0;
    for (const auto& r : sorted) positives += r.accurate ? 1 : 0;
    const std::size_t negatives = sorted.size() - positives;

    SweepSummary s;
    s.beta = beta;
    Confusion c{0, 0, negatives, positives};
    s.points.push_back(make_point(-kInf, c, beta));
    for (std::size_t i = 0; i < sorted.size();) {
        const double score = sorted[i].score;
        for (; i < sorted.size() && sorted[i].score == score; ++i) {
            if (sorted[i].accurate) {
                ++c.tp;
                --c.fn;
            } else {
                ++c.fp;
                --c.tn;
            }
        }
        double t = kInf;
        if (i < sorted.size()) {
            const double next = sorted[i].score;
            t = score + (next - score) / 2.0;
            if (!(t > score)) t = next;
        }
        s.points.push_back(make_point(t, c, beta));
    }
    s.degenerate = s.points.size() == 2;

    if (positives > 0 && negatives > 0) {
        std::uint64_t twice_area = 0;
        for (std::size_t i = 1; i < s.points.size(); ++i) {
            const auto& a = s.points[i - 1].counts;
            const auto& b = s.points[i].counts;
            twice_area += static_cast<std::uint64_t>(b.fp - a.fp) * (a.tp + b.tp);
        }
        s.auroc = static_cast<double>(twice_area) /
                  (2.0 * static_cast<double>(positives) * static_cast<double>(negatives));
    }
    if (positives > 0) {
        double ap = 0.0;
        for (std::size_t i = 1; i < s.points.size(); ++i) {
            const std::size_t gained = s.points[i].counts.tp - s.points[i - 1].counts.tp;
            if (gained == 0) continue;
            ap += static_cast<double>(gained) / static_cast<double>(positives) *
                  s.points[i].precision;
        }
        s.aupr = ap;
    }

    s.best_amd = s.points.front();
    s.best_fbeta = s.points.front();
    for (const auto& p : s.points) {
        if (better(p.a_md, p.p_ac, s.best_amd, s.best_amd.a_md)) s.best_amd = p;
        if (better(p.f_beta, p.p_ac, s.best_fbeta, s.best_fbeta.f_beta)) s.best_fbeta = p;
    }
    return s;
}

double auroc(std::span<const PixelRecord> records) {
    const auto s = sweep(records);
    if (!s.auroc) throw std::invalid_argument("auroc: needs both accurate and inaccurate records");
    return *s.auroc;
}

double aupr(std::span<const PixelRecord> records) {
    const auto s = sweep(records);
    if (!s.aupr) throw std::invalid_argument("aupr: needs at least one accurate record");
    return *s.aupr;
}

double threshold_from_gamma(double gamma) { return std::nextafter(-gamma, kInf); }

CurvePoint optimal_threshold(std::span<const PixelRecord> records, Objective objective,
                             double beta) {
    const auto s = sweep(records, beta);
    return objective == Objective::a_md ? s.best_amd : s.best_fbeta;
}

ProtocolReport threshold_protocols(std::span<const PixelRecord> records,
                                   std::optional<double> gamma,
                                   std::span<const std::size_t> validation_sizes,
                                   std::size_t trials, std::uint64_t seed, double beta) {
    require_records(records, "threshold_protocols");
    std::set<std::uint32_t> id_set;
    for (const auto& r : records) id_set.insert(r.image);
    const std::vector<std::uint32_t> images(id_set.begin(), id_set.end());

    ProtocolReport report;
    report.beta = beta;
    for (std::size_t size : validation_sizes) {
        if (size == 0 || size >= images.size()) {
            throw std::invalid_argument("threshold_protocols: validation size " +
                                        std::to_string(size) + " must be in [1, " +
                                        std::to_string(images.size()) + ")");
        }
        ValidationSizeReport vr;
        vr.validation_images = size;
        for (std::size_t trial = 0; trial < trials; ++trial) {
            Rng rng(derive_seed(seed, size * 1000003ULL + trial));
            std::vector<std::uint32_t> order = images;
            for (std::size_t i = 0; i < size; ++i) {
                std::swap(order[i], order[i + rng.uniform_index(order.size() - i)]);
            }
            const std::set<std::uint32_t> chosen(order.begin(), order.begin() + size);
            std::vector<PixelRecord> val, test;
            for (const auto& r : records) (chosen.count(r.image) ? val : test).push_back(r);
            const auto val_sweep = sweep(val, beta);
            const auto test_sweep = sweep(test, beta);
            vr.achieved_amd.push_back(evaluate_threshold(test, val_sweep.best_amd.threshold, beta).a_md);
            vr.achieved_fbeta.push_back(
                evaluate_threshold(test, val_sweep.best_fbeta.threshold, beta).f_beta);
            vr.optimal_amd.push_back(test_sweep.best_amd.a_md);
            vr.optimal_fbeta.push_back(test_sweep.best_fbeta.f_beta);
        }
        report.by_size.push_back(std::move(vr));
    }
    if (gamma) {
        ZeroValidationReport z;
        z.gamma = *gamma;
        z.at_gamma = evaluate_threshold(records, threshold_from_gamma(*gamma), beta);
        const auto s = sweep(records, beta);
        z.max_amd = s.best_amd.a_md;
        z.max_fbeta = s.best_fbeta.f_beta;
        report.zero_validation = z;
    }
    return report;
}

CrossDomainReport cross_domain(std::span<const PixelRecord> from, std::span<const PixelRecord> to,
                               double beta) {
    CrossDomainReport r;
    r.threshold = sweep(from, beta).best_fbeta.threshold;
    r.fbeta_applied = evaluate_threshold(to, r.threshold, beta).f_beta;
    r.fbeta_optimal = sweep(to, beta).best_fbeta.f_beta;
    r.delta = r.fbeta_applied - r.fbeta_optimal;
    return r;
}

void write_curve_csv(std::ostream& os, const SweepSummary& summary) {
    os << "threshold,tp,fp,tn,fn,precision,recall,tpr,fpr,f_beta,a_md,p_ac\n";
    char buf[512];
    for (const auto& p : summary.points) {
        std::snprintf(buf, sizeof(buf), "%.17g,%zu,%zu,%zu,%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                      p.threshold, p.counts.tp, p.counts.fp, p.counts.tn, p.counts.fn, p.precision,
                      p.recall, p.tpr, p.fpr, p.f_beta, p.a_md, p.p_ac);
        os << buf;
    }
}

double mean_of(std::span<const double> values) {
    if (values.empty()) return 0.0;
    double s = 0.0;
    for (double v : values) s += v;
    return s / static_cast<double>(values.size());
}

double stddev_of(std::span<const double> values) {
    if (values.size() < 2) return 0.0;
    const double m = mean_of(values);
    double s = 0.0;
    for (double v : values) s += (v - m) * (v - m);
    return std::sqrt(s / static_cast<double>(values.size() - 1));
}

}  // namespace gssl
