#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "xlner/corpus.hpp"
#include "xlner/tagger.hpp"

namespace xlner {

/// A labeled phrase: inclusive token range plus entity type.
struct Span {
    std::size_t start = 0;
    std::size_t end = 0; // inclusive
    EntityType type = EntityType::Per;

    auto operator<=>(const Span&) const = default;
};

/// BIO decoding with the conlleval convention: an I-X that does not continue
/// a span of type X starts a new span.
std::vector<Span> extract_spans(std::span<const Tag> labels);

/// String-tag variant; throws invalid_input on a tag outside the 9-tag set.
std::vector<Span> extract_spans(std::span<const std::string> labels);

/// Inverse of extract_spans for non-overlapping spans: O everywhere except
/// B-X/I-X over each span.
std::vector<Tag> spans_to_labels(std::span<const Span> spans, std::size_t length);

/// Phrase-level precision/recall/F1, overall and per entity type.
struct F1Report {
    struct Counts {
        std::size_t gold = 0;
        std::size_t predicted = 0;
        std::size_t correct = 0;

        double precision() const;
        double recall() const;
        double f1() const;
    };

    Counts overall;
    std::array<Counts, kNumEntityTypes> per_type;
};

/// Exact-match span scoring of predictions against a labeled dataset.
F1Report f1_report(const Dataset& gold, std::span<const std::vector<Tag>> predicted);

nlohmann::json f1_to_json(const F1Report& report);

/// Teacher mispredictions bucketed by the teacher's confidence (its max
/// probability), with the fraction the student corrects per bucket.
struct CorrectionHistogram {
    std::vector<double> edges;           // bin i covers [edges[i], edges[i+1])
    std::vector<std::size_t> count;      // teacher mispredictions in the bin
    std::vector<std::size_t> corrected;  // of those, student label == gold

    std::size_t bins() const { return count.size(); }
    std::size_t total() const;
    /// corrected / count, or 0 for an empty bin.
    double fraction(std::size_t bin) const;
};

/// Flat token-stream form used by both the params overload and the tests.
CorrectionHistogram correction_histogram(std::span<const double> teacher_confidence,
                                         std::span<const Tag> teacher_labels,
                                         std::span<const Tag> student_labels,
                                         std::span<const Tag> gold, double bin_width = 0.1);

/// Runs both taggers over the labeled test set and buckets the teacher's
/// mistakes by its per-token confidence.
CorrectionHistogram correction_histogram(const TaggerParams& teacher,
                                         const TaggerParams& student, const Dataset& test,
                                         const Vocab& vocab, double bin_width = 0.1);

nlohmann::json histogram_to_json(const CorrectionHistogram& hist);
void write_histogram_csv(const CorrectionHistogram& hist, const std::filesystem::path& path);

} // namespace xlner
