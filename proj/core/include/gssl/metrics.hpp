#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

namespace gssl {

// Higher score = more uncertain. A pixel is certain at threshold t iff score < t.
struct PixelRecord {
    double score = 0.0;
    bool accurate = false;
    std::uint32_t image = 0;
};

struct Confusion {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t tn = 0;
    std::size_t fn = 0;
    std::size_t total() const { return tp + fp + tn + fn; }
    bool operator==(const Confusion&) const = default;
};

Confusion confusion_at_threshold(std::span<const PixelRecord> records, double threshold);

double f_beta(std::size_t tp, std::size_t fp, std::size_t fn, double beta);

struct MdAccuracy {
    double a_md = 0.0;
    double p_ac = 0.0;
};
MdAccuracy a_md_and_pac(const Confusion& c);

struct CurvePoint {
    double threshold = 0.0;
    Confusion counts;
    double precision = 1.0;  // 1 when nothing is certain
    double recall = 0.0;
    double tpr = 0.0;
    double fpr = 0.0;
    double f_beta = 0.0;     // 0 when undefined
    double a_md = 0.0;
    double p_ac = 0.0;
};

CurvePoint evaluate_threshold(std::span<const PixelRecord> records, double threshold, double beta);

struct SweepSummary {
    double beta = 0.5;
    std::vector<CurvePoint> points;  // ascending threshold, −∞ first, +∞ last
    std::optional<double> auroc;     // absent for single-class input
    std::optional<double> aupr;      // absent without accurate records
    CurvePoint best_amd;             // max A_MD; ties go to larger p_ac
    CurvePoint best_fbeta;           // max F_β; ties go to larger p_ac
    bool degenerate = false;         // all scores identical
};

// Thresholds at −∞, every midpoint between consecutive distinct scores, +∞.
SweepSummary sweep(std::span<const PixelRecord> records, double beta = 0.5);

// Trapezoidal ROC area; equals P(s_inaccurate > s_accurate) + ½P(tie).
double auroc(std::span<const PixelRecord> records);
// Step-wise average precision with precision held right-constant.
double aupr(std::span<const PixelRecord> records);

// Score threshold reproducing the inclusive rule max cosine ≥ gamma under
// score = −max cosine.
double threshold_from_gamma(double gamma);

enum class Objective { a_md, f_beta };

CurvePoint optimal_threshold(std::span<const PixelRecord> records, Objective objective,
                             double beta = 0.5);

struct ValidationSizeReport {
    std::size_t validation_images = 0;
    std::vector<double> achieved_amd;    // on the held-out images, one per trial
    std::vector<double> achieved_fbeta;
    std::vector<double> optimal_amd;     // sweep maximum on the same held-out images
    std::vector<double> optimal_fbeta;
};

struct ZeroValidationReport {
    double gamma = 0.0;
    CurvePoint at_gamma;
    double max_amd = 0.0;
    double max_fbeta = 0.0;
};

struct ProtocolReport {
    double beta = 0.5;
    std::vector<ValidationSizeReport> by_size;
    std::optional<ZeroValidationReport> zero_validation;
};

// Validation-size sampling by image and, when gamma is given, the
// zero-validation evaluation. Rejects validation sizes ≥ the image count.
ProtocolReport threshold_protocols(std::span<const PixelRecord> records,
                                   std::optional<double> gamma,
                                   std::span<const std::size_t> validation_sizes,
                                   std::size_t trials, std::uint64_t seed, double beta = 0.5);

struct CrossDomainReport {
    double threshold = 0.0;       // F_β-optimal on the source records
    double fbeta_applied = 0.0;   // on the destination records at that threshold
    double fbeta_optimal = 0.0;   // destination sweep maximum
    double delta = 0.0;           // applied − optimal (≤ 0)
};

CrossDomainReport cross_domain(std::span<const PixelRecord> from, std::span<const PixelRecord> to,
                               double beta = 0.5);

void write_curve_csv(std::ostream& os, const SweepSummary& summary);

double mean_of(std::span<const double> values);
double stddev_of(std::span<const double> values);

}  // namespace gssl
