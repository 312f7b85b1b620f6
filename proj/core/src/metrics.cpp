// SPDX-License-Identifier: Apache-2.0
#include "vedocr/metrics.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

#include "vedocr/error.hpp"
#include "vedocr/utf8.hpp"

namespace vedocr {

EditCounts levenshtein_align(const std::vector<std::string>& ref,
                             const std::vector<std::string>& hyp) {
    const size_t n = ref.size(), m = hyp.size();
    // dist[i][j] = minimal edits turning ref[0..i) into hyp[0..j).
    std::vector<std::vector<int64_t>> dist(n + 1,
                                           std::vector<int64_t>(m + 1, 0));
    for (size_t i = 0; i <= n; ++i) dist[i][0] = static_cast<int64_t>(i);
    for (size_t j = 0; j <= m; ++j) dist[0][j] = static_cast<int64_t>(j);
    for (size_t i = 1; i <= n; ++i) {
        for (size_t j = 1; j <= m; ++j) {
            const int64_t sub =
                dist[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
            const int64_t del = dist[i - 1][j] + 1;
            const int64_t ins = dist[i][j - 1] + 1;
            dist[i][j] = std::min({sub, ins, del});
        }
    }
    EditCounts counts;
    counts.reference_length = static_cast<int64_t>(n);
    // Backtrace; when costs tie, prefer substitution, then insertion, then
    // deletion.
    size_t i = n, j = m;
    while (i > 0 || j > 0) {
        if (i > 0 && j > 0 &&
            dist[i][j] == dist[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1)) {
            if (ref[i - 1] == hyp[j - 1]) {
                ++counts.correct;
            } else {
                ++counts.substitutions;
            }
            --i;
            --j;
        } else if (j > 0 && dist[i][j] == dist[i][j - 1] + 1) {
            ++counts.insertions;
            --j;
        } else {
            ++counts.deletions;
            --i;
        }
    }
    return counts;
}

namespace {

double error_rate(const std::vector<std::string>& ref,
                  const std::vector<std::string>& hyp, const char* kind) {
    if (ref.empty()) {
        throw ContractError(std::string(kind) + ": empty reference");
    }
    const EditCounts c = levenshtein_align(ref, hyp);
    return static_cast<double>(c.distance()) /
           static_cast<double>(c.reference_length);
}

} // namespace

double wer(const std::string& reference, const std::string& hypothesis) {
    return error_rate(split_words(reference), split_words(hypothesis), "wer");
}

double cer(const std::string& reference, const std::string& hypothesis) {
    return error_rate(utf8_codepoints(reference), utf8_codepoints(hypothesis),
                      "cer");
}

std::string cluster_name(Cluster c) {
    return c == Cluster::Hwr ? "HWR" : "OCR";
}

Cluster cluster_from_name(const std::string& name) {
    if (name == "HWR") return Cluster::Hwr;
    if (name == "OCR") return Cluster::Ocr;
    throw ValidationError("cluster must be HWR or OCR, got '" + name + "'");
}

BenchmarkReport aggregate(const std::vector<DatasetScore>& entries) {
    if (entries.empty()) {
        throw ContractError("aggregate: no datasets");
    }
    BenchmarkReport report;
    report.entries = entries;
    double hwr_sum = 0.0, ocr_sum = 0.0, all_sum = 0.0;
    int64_t hwr_n = 0, ocr_n = 0;
    for (const DatasetScore& e : entries) {
        all_sum += e.wer_percent;
        if (e.cluster == Cluster::Hwr) {
            hwr_sum += e.wer_percent;
            ++hwr_n;
        } else {
            ocr_sum += e.wer_percent;
            ++ocr_n;
        }
    }
    // A single-cluster report leaves the other cluster score equal to it, so
    // one dataset yields three identical scores.
    report.hwr_score = hwr_n > 0 ? hwr_sum / hwr_n : ocr_sum / ocr_n;
    report.ocr_score = ocr_n > 0 ? ocr_sum / ocr_n : hwr_sum / hwr_n;
    report.midad_score = all_sum / static_cast<double>(entries.size());
    return report;
}

std::string report_to_json(const BenchmarkReport& report) {
    nlohmann::json j;
    j["datasets"] = nlohmann::json::array();
    for (const DatasetScore& e : report.entries) {
        j["datasets"].push_back({{"dataset", e.dataset},
                                 {"cluster", cluster_name(e.cluster)},
                                 {"wer", e.wer_percent},
                                 {"cer", e.cer_percent},
                                 {"samples", e.samples}});
    }
    j["hwr_score"] = report.hwr_score;
    j["ocr_score"] = report.ocr_score;
    j["midad_score"] = report.midad_score;
    return j.dump();
}

std::string report_to_table(const BenchmarkReport& report) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2);
    size_t name_w = 8;
    for (const DatasetScore& e : report.entries)
        name_w = std::max(name_w, e.dataset.size());
    os << std::left << std::setw(static_cast<int>(name_w) + 2) << "dataset"
       << std::setw(9) << "cluster" << std::right << std::setw(9) << "wer%"
       << std::setw(9) << "cer%" << std::setw(9) << "n" << '\n';
    for (const DatasetScore& e : report.entries) {
        os << std::left << std::setw(static_cast<int>(name_w) + 2) << e.dataset
           << std::setw(9) << cluster_name(e.cluster) << std::right
           << std::setw(9) << e.wer_percent << std::setw(9) << e.cer_percent
           << std::setw(9) << e.samples << '\n';
    }
    os << std::left << std::setw(static_cast<int>(name_w) + 2) << "hwr_score"
       << std::setw(9) << "" << std::right << std::setw(9) << report.hwr_score
       << '\n';
    os << std::left << std::setw(static_cast<int>(name_w) + 2) << "ocr_score"
       << std::setw(9) << "" << std::right << std::setw(9) << report.ocr_score
       << '\n';
    os << std::left << std::setw(static_cast<int>(name_w) + 2) << "midad_score"
       << std::setw(9) << "" << std::right << std::setw(9)
       << report.midad_score << '\n';
    return os.str();
}

} // namespace vedocr
