#include "xlner/eval.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

namespace xlner {

std::vector<Span> extract_spans(std::span<const Tag> labels) {
    std::vector<Span> spans;
    bool open = false;
    Span current;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const Tag t = labels[i];
        if (static_cast<std::size_t>(t) >= kNumLabels)
            throw invalid_input("extract_spans: tag outside the label set");
        const bool continues = open && is_inside(t) && tag_entity_type(t) == current.type;
        if (continues) {
            current.end = i;
            continue;
        }
        if (open) {
            spans.push_back(current);
            open = false;
        }
        if (t != Tag::O) {
            // B-X always opens; a dangling I-X opens too (conlleval rule).
            current = Span{i, i, tag_entity_type(t)};
            open = true;
        }
    }
    if (open) spans.push_back(current);
    return spans;
}

std::vector<Span> extract_spans(std::span<const std::string> labels) {
    std::vector<Tag> tags;
    tags.reserve(labels.size());
    for (const std::string& s : labels) {
        auto t = parse_tag(s);
        if (!t) throw invalid_input("extract_spans: unknown tag '" + s + "'");
        tags.push_back(*t);
    }
    return extract_spans(tags);
}

std::vector<Tag> spans_to_labels(std::span<const Span> spans, std::size_t length) {
    std::vector<Tag> labels(length, Tag::O);
    for (const Span& s : spans) {
        if (s.end >= length || s.start > s.end)
            throw invalid_input("spans_to_labels: span outside the sentence");
        labels[s.start] = begin_tag(s.type);
        for (std::size_t i = s.start + 1; i <= s.end; ++i) labels[i] = inside_tag(s.type);
    }
    return labels;
}

double F1Report::Counts::precision() const {
    return predicted == 0 ? 0.0
                          : static_cast<double>(correct) / static_cast<double>(predicted);
}

double F1Report::Counts::recall() const {
    return gold == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(gold);
}

double F1Report::Counts::f1() const {
    const double p = precision();
    const double r = recall();
    return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

F1Report f1_report(const Dataset& gold, std::span<const std::vector<Tag>> predicted) {
    if (!gold.labeled) throw invalid_input("f1_report: gold dataset must be labeled");
    gold.validate();
    if (predicted.size() != gold.sentences.size())
        throw invalid_input("f1_report: need one prediction sequence per sentence");

    F1Report report;
    for (std::size_t s = 0; s < gold.sentences.size(); ++s) {
        const TaggedSentence& sent = gold.sentences[s];
        if (predicted[s].size() != sent.size())
            throw invalid_input("f1_report: prediction length mismatch");
        std::vector<Span> gold_spans = extract_spans(*sent.labels);
        std::vector<Span> pred_spans = extract_spans(predicted[s]);
        for (const Span& g : gold_spans) {
            ++report.overall.gold;
            ++report.per_type[static_cast<std::size_t>(g.type)].gold;
        }
        for (const Span& p : pred_spans) {
            ++report.overall.predicted;
            ++report.per_type[static_cast<std::size_t>(p.type)].predicted;
            for (const Span& g : gold_spans)
                if (p == g) {
                    ++report.overall.correct;
                    ++report.per_type[static_cast<std::size_t>(p.type)].correct;
                    break;
                }
        }
    }
    return report;
}

namespace {

nlohmann::json counts_to_json(const F1Report::Counts& c) {
    return nlohmann::json{{"gold", c.gold},           {"predicted", c.predicted},
                          {"correct", c.correct},     {"precision", c.precision()},
                          {"recall", c.recall()},     {"f1", c.f1()}};
}

} // namespace

nlohmann::json f1_to_json(const F1Report& report) {
    nlohmann::json per_type;
    for (std::size_t e = 0; e < kNumEntityTypes; ++e)
        per_type[std::string(entity_type_name(static_cast<EntityType>(e)))] =
            counts_to_json(report.per_type[e]);
    return nlohmann::json{{"overall", counts_to_json(report.overall)},
                          {"per_type", std::move(per_type)}};
}

std::size_t CorrectionHistogram::total() const {
    std::size_t n = 0;
    for (std::size_t c : count) n += c;
    return n;
}

double CorrectionHistogram::fraction(std::size_t bin) const {
    return count[bin] == 0
               ? 0.0
               : static_cast<double>(corrected[bin]) / static_cast<double>(count[bin]);
}

CorrectionHistogram correction_histogram(std::span<const double> teacher_confidence,
                                         std::span<const Tag> teacher_labels,
                                         std::span<const Tag> student_labels,
                                         std::span<const Tag> gold, double bin_width) {
    const std::size_t n = gold.size();
    if (teacher_confidence.size() != n || teacher_labels.size() != n ||
        student_labels.size() != n)
        throw invalid_input("correction_histogram: token stream length mismatch");
    if (!(bin_width > 0.0 && bin_width < 1.0))
        throw invalid_input("correction_histogram: bin width must lie in (0, 1)");

    CorrectionHistogram hist;
    // Edges bin_width, 2*bin_width, ..., 1.0; confidences below the first
    // edge clamp into bin 0 (cannot happen at the default width with 9
    // labels, where max probability is at least 1/9).
    const auto nbins = static_cast<std::size_t>(std::lround((1.0 - bin_width) / bin_width));
    hist.edges.resize(nbins + 1);
    for (std::size_t b = 0; b <= nbins; ++b)
        hist.edges[b] = bin_width * static_cast<double>(b + 1);
    hist.edges.back() = 1.0;
    hist.count.assign(nbins, 0);
    hist.corrected.assign(nbins, 0);

    for (std::size_t i = 0; i < n; ++i) {
        if (teacher_labels[i] == gold[i]) continue;
        const double conf = teacher_confidence[i];
        std::size_t bin = 0;
        if (conf >= hist.edges.front()) {
            bin = static_cast<std::size_t>((conf - hist.edges.front()) / bin_width);
            if (bin >= nbins) bin = nbins - 1; // conf == 1.0 lands in the top bin
        }
        ++hist.count[bin];
        if (student_labels[i] == gold[i]) ++hist.corrected[bin];
    }
    return hist;
}

CorrectionHistogram correction_histogram(const TaggerParams& teacher,
                                         const TaggerParams& student, const Dataset& test,
                                         const Vocab& vocab, double bin_width) {
    if (!test.labeled) throw invalid_input("correction_histogram: test dataset must be labeled");
    test.validate();

    std::vector<double> confidence;
    std::vector<Tag> teacher_labels, student_labels, gold;
    for (const TaggedSentence& sent : test.sentences) {
        const std::vector<int> ids = vocab.encode(sent);
        const std::vector<ProbDist> dists = predict_dist(teacher, ids);
        const std::vector<Tag> student_pred = predict_labels(student, ids);
        for (std::size_t i = 0; i < ids.size(); ++i) {
            const std::size_t best = argmax(dists[i].p);
            confidence.push_back(dists[i][best]);
            teacher_labels.push_back(static_cast<Tag>(best));
            student_labels.push_back(student_pred[i]);
            gold.push_back((*sent.labels)[i]);
        }
    }
    return correction_histogram(confidence, teacher_labels, student_labels, gold, bin_width);
}

nlohmann::json histogram_to_json(const CorrectionHistogram& hist) {
    nlohmann::json bins = nlohmann::json::array();
    for (std::size_t b = 0; b < hist.bins(); ++b)
        bins.push_back(nlohmann::json{{"lo", hist.edges[b]},
                                      {"hi", hist.edges[b + 1]},
                                      {"mispredictions", hist.count[b]},
                                      {"corrected", hist.corrected[b]},
                                      {"fraction", hist.fraction(b)}});
    return nlohmann::json{{"bins", std::move(bins)}, {"total_mispredictions", hist.total()}};
}

void write_histogram_csv(const CorrectionHistogram& hist, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("write_histogram_csv: cannot open " + path.string());
    out << "bin_lo,bin_hi,mispredictions,corrected,fraction\n";
    out.precision(17);
    for (std::size_t b = 0; b < hist.bins(); ++b)
        out << hist.edges[b] << ',' << hist.edges[b + 1] << ',' << hist.count[b] << ','
            << hist.corrected[b] << ',' << hist.fraction(b) << '\n';
    if (!out) throw io_error("write_histogram_csv: write failed for " + path.string());
}

} // namespace xlner
