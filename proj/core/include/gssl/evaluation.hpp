#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gssl/data.hpp"
#include "gssl/metrics.hpp"
#include "gssl/model.hpp"

namespace gssl {

// Prototypes from every labelled pixel of the (un-augmented) source set.
// Classes absent from the set fall back to the model's bank.
PrototypeBank source_prototypes(const ModelState& m, const Dataset& source, std::size_t batch = 8);

// One record per non-void test pixel: score = −max cosine of the upsampled
// prototype scores, accurate iff the argmax equals a known-class label.
std::vector<PixelRecord> evaluate_records(const ModelState& m, const PrototypeBank& prototypes,
                                          const Dataset& test, std::size_t batch = 8);

// Largest share of all pixels of `images` that the prototype argmax assigns
// to a single class; near 1 means the features collapsed onto one prototype.
double dominant_class_fraction(const ModelState& m, const PrototypeBank& prototypes,
                               const Dataset& images, std::size_t batch = 8);

// GTSR f64 tensor of shape n×3 holding (score, accurate, image).
void write_records(const std::filesystem::path& path, const std::vector<PixelRecord>& records);
std::vector<PixelRecord> read_records(const std::filesystem::path& path);

// auroc, aupr, max_f05 (+p_ac, threshold), max_amd (+p_ac, threshold),
// accuracy and, if gamma is given, the row evaluated at the trained threshold.
std::string sweep_summary_json(const SweepSummary& s, std::span<const PixelRecord> records,
                               std::optional<double> gamma);
std::string protocol_report_json(const ProtocolReport& r);
std::string cross_domain_json(const CrossDomainReport& r, const std::string& from, const std::string& to);

}  // namespace gssl
