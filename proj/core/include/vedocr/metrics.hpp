// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace vedocr {

/// Decomposition of a minimal edit alignment. N = S + D + C always holds for
/// the reference; the hypothesis length equals S + I + C.
struct EditCounts {
    int64_t substitutions = 0;
    int64_t deletions = 0;
    int64_t insertions = 0;
    int64_t correct = 0;
    int64_t reference_length = 0;

    int64_t distance() const { return substitutions + deletions + insertions; }
};

/// Minimal unit-cost alignment of hyp against ref. Backtrace ties are broken
/// by preferring substitution over insertion over deletion; the distance is
/// unaffected by that choice.
EditCounts levenshtein_align(const std::vector<std::string>& ref,
                             const std::vector<std::string>& hyp);

/// (S+D+I)/N over whitespace-separated word tokens. Empty reference (after
/// tokenization) is a contract error. Not clipped: may exceed 1.
double wer(const std::string& reference, const std::string& hypothesis);

/// Same rate over Unicode code points; whitespace and combining marks count
/// as characters.
double cer(const std::string& reference, const std::string& hypothesis);

enum class Cluster { Hwr, Ocr };

std::string cluster_name(Cluster c);
Cluster cluster_from_name(const std::string& name);

struct DatasetScore {
    std::string dataset;
    Cluster cluster = Cluster::Ocr;
    double wer_percent = 0.0;
    double cer_percent = 0.0;
    int64_t samples = 0;
};

/// Per-dataset rates plus the three summary scores, all in percent.
/// hwr/ocr scores are unweighted means of WER over their cluster's datasets;
/// the overall score is the unweighted mean over ALL datasets (not the mean
/// of the two cluster scores).
struct BenchmarkReport {
    std::vector<DatasetScore> entries;
    double hwr_score = 0.0;
    double ocr_score = 0.0;
    double midad_score = 0.0;
};

/// Builds the report from per-dataset entries. Referencing an empty cluster
/// is a contract error; values are kept at full precision and rounded only
/// for display.
BenchmarkReport aggregate(const std::vector<DatasetScore>& entries);

std::string report_to_json(const BenchmarkReport& report);
std::string report_to_table(const BenchmarkReport& report);

} // namespace vedocr
