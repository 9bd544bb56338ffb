#include "xlner/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "xlner/rng.hpp"

namespace xlner {

namespace {

constexpr std::array<std::string_view, kNumLabels> kTagNames = {
    "O", "B-PER", "I-PER", "B-LOC", "I-LOC", "B-ORG", "I-ORG", "B-MISC", "I-MISC"};

constexpr std::array<std::string_view, kNumEntityTypes> kEntityNames = {"PER", "LOC", "ORG",
                                                                        "MISC"};

constexpr std::array<std::string_view, 5> kSlotNames = {"FW", "PER", "LOC", "ORG", "MISC"};

} // namespace

std::string_view tag_name(Tag t) { return kTagNames[static_cast<std::size_t>(t)]; }

std::optional<Tag> parse_tag(std::string_view s) {
    for (std::size_t i = 0; i < kTagNames.size(); ++i)
        if (s == kTagNames[i]) return static_cast<Tag>(i);
    return std::nullopt;
}

std::string_view entity_type_name(EntityType t) { return kEntityNames[static_cast<std::size_t>(t)]; }

std::string_view slot_name(Slot s) { return kSlotNames[static_cast<std::size_t>(s)]; }

std::optional<Slot> parse_slot(std::string_view s) {
    for (std::size_t i = 0; i < kSlotNames.size(); ++i)
        if (s == kSlotNames[i]) return static_cast<Slot>(i);
    return std::nullopt;
}

void Dataset::validate() const {
    for (const TaggedSentence& s : sentences) {
        if (s.tokens.empty()) throw invalid_input("Dataset: empty sentence");
        if (labeled) {
            if (!s.labels) throw invalid_input("Dataset: labeled dataset with unlabeled sentence");
            if (s.labels->size() != s.tokens.size())
                throw invalid_input("Dataset: label/token length mismatch");
        } else if (s.labels) {
            throw invalid_input("Dataset: unlabeled dataset with labeled sentence");
        }
    }
}

Dataset Dataset::without_labels() const {
    Dataset out;
    out.language = language;
    out.labeled = false;
    out.sentences.reserve(sentences.size());
    for (const TaggedSentence& s : sentences)
        out.sentences.push_back(TaggedSentence{s.tokens, std::nullopt});
    return out;
}

std::size_t Dataset::token_count() const {
    std::size_t n = 0;
    for (const TaggedSentence& s : sentences) n += s.size();
    return n;
}

void LanguageSpec::validate() const {
    if (language.empty()) throw config_error("LanguageSpec: empty language id");
    if (function_words.empty()) throw config_error("LanguageSpec: empty function-word lexicon");
    for (std::size_t e = 0; e < kNumEntityTypes; ++e)
        if (entities[e].empty())
            throw config_error(std::string("LanguageSpec: empty entity lexicon for ") +
                               std::string(kEntityNames[e]));
    if (templates.empty()) throw config_error("LanguageSpec: no templates");
    if (!(overlap >= 0.0 && overlap <= 1.0))
        throw config_error("LanguageSpec: overlap outside [0,1]");
    for (const auto& t : templates) {
        bool has_fw = false;
        for (Slot s : t) has_fw = has_fw || (s == Slot::Fw);
        if (!has_fw) throw config_error("LanguageSpec: template without a FW slot");
    }
}

namespace {

/// Width of the per-slot function-word slice generate_corpus leans on.
constexpr std::size_t kAnchorWidth = 3;

std::string random_word(Rng& rng) {
    const std::size_t len = 3 + rng.below(5); // 3..7 letters
    std::string w(len, 'a');
    for (char& c : w) c = static_cast<char>('a' + rng.below(26));
    return w;
}

// Random word not already present in `taken`; inserts the result.
std::string fresh_word(Rng& rng, std::unordered_set<std::string>& taken) {
    for (;;) {
        std::string w = random_word(rng);
        if (taken.insert(w).second) return w;
    }
}

// Multi-token entity name (1..3 tokens), unique within `taken`.
std::string fresh_name(Rng& rng, std::unordered_set<std::string>& taken) {
    for (;;) {
        const std::size_t n_tokens = 1 + rng.below(3);
        std::string name;
        for (std::size_t i = 0; i < n_tokens; ++i) {
            if (i > 0) name += ' ';
            name += random_word(rng);
        }
        if (taken.insert(name).second) return name;
    }
}

// Template with the given number of entity slots; remaining slots are FW.
// Slot count 5..12 keeps generated sentences in roughly 5..20 tokens once
// multi-token names are expanded.
std::vector<Slot> make_template(Rng& rng, std::size_t n_entities) {
    const std::size_t len = 5 + rng.below(8);
    std::vector<Slot> slots(len, Slot::Fw);
    if (n_entities > 0) {
        std::vector<std::size_t> positions(len);
        for (std::size_t i = 0; i < len; ++i) positions[i] = i;
        rng.shuffle(positions);
        for (std::size_t e = 0; e < n_entities && e < len; ++e) {
            Slot entity = static_cast<Slot>(1 + rng.below(kNumEntityTypes));
            slots[positions[e]] = entity;
        }
    }
    return slots;
}

std::vector<std::string> split_tokens(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

} // namespace

LanguageSpec make_language_spec(const std::string& language, const SpecSizes& sizes,
                                std::uint64_t seed) {
    if (sizes.function_words == 0 || sizes.names_per_type == 0 || sizes.templates == 0)
        throw config_error("make_language_spec: lexicon and template sizes must be positive");
    Rng rng(seed);
    LanguageSpec spec;
    spec.language = language;
    spec.overlap = 1.0;

    std::unordered_set<std::string> taken_words;
    spec.function_words.reserve(sizes.function_words);
    for (std::size_t i = 0; i < sizes.function_words; ++i)
        spec.function_words.push_back(fresh_word(rng, taken_words));

    for (std::size_t e = 0; e < kNumEntityTypes; ++e) {
        std::unordered_set<std::string> taken_names;
        spec.entities[e].reserve(sizes.names_per_type);
        for (std::size_t i = 0; i < sizes.names_per_type; ++i)
            spec.entities[e].push_back(fresh_name(rng, taken_names));
    }

    // Leading 60% of templates carry 1..3 entities, the rest are FW-only.
    const std::size_t n_entity_templates = (sizes.templates * 6 + 9) / 10;
    spec.templates.reserve(sizes.templates);
    for (std::size_t t = 0; t < sizes.templates; ++t) {
        const std::size_t n_entities = t < n_entity_templates ? 1 + rng.below(3) : 0;
        spec.templates.push_back(make_template(rng, n_entities));
    }
    spec.validate();
    return spec;
}

LanguageSpec derive_language_spec(const LanguageSpec& target, const std::string& language,
                                  double overlap, std::uint64_t seed) {
    target.validate();
    if (!(overlap >= 0.0 && overlap <= 1.0))
        throw config_error("derive_language_spec: overlap outside [0,1]");
    Rng rng(seed);
    LanguageSpec spec;
    spec.language = language;
    spec.overlap = overlap;

    // Shared prefix keeps the overlap sets nested across the rho grid.
    const std::size_t n_fw = target.function_words.size();
    const std::size_t n_shared_fw =
        static_cast<std::size_t>(std::llround(overlap * static_cast<double>(n_fw)));
    std::unordered_set<std::string> taken(target.function_words.begin(),
                                          target.function_words.end());
    spec.function_words.assign(target.function_words.begin(),
                               target.function_words.begin() + n_shared_fw);
    while (spec.function_words.size() < n_fw)
        spec.function_words.push_back(fresh_word(rng, taken));

    for (std::size_t e = 0; e < kNumEntityTypes; ++e) {
        const std::size_t n_names = target.entities[e].size();
        const std::size_t n_keep =
            static_cast<std::size_t>(std::llround(overlap * static_cast<double>(n_names)));
        spec.entities[e] = target.entities[e];
        for (std::size_t i = n_keep; i < n_names; ++i) {
            std::vector<std::string> toks = split_tokens(spec.entities[e][i]);
            std::string suffixed;
            for (std::size_t t = 0; t < toks.size(); ++t) {
                if (t > 0) suffixed += ' ';
                suffixed += toks[t] + language;
            }
            spec.entities[e][i] = suffixed;
        }
    }

    const std::size_t n_templates = target.templates.size();
    const std::size_t n_shared_t =
        static_cast<std::size_t>(std::llround(overlap * static_cast<double>(n_templates)));
    spec.templates.assign(target.templates.begin(), target.templates.begin() + n_shared_t);
    while (spec.templates.size() < n_templates) {
        const bool with_entities = (spec.templates.size() % 2 == 0);
        spec.templates.push_back(make_template(rng, with_entities ? 1 + rng.below(3) : 0));
    }
    spec.validate();
    return spec;
}

Dataset generate_corpus(const LanguageSpec& spec, std::size_t n_sentences, std::uint64_t seed) {
    spec.validate();
    if (n_sentences == 0) throw invalid_input("generate_corpus: need at least one sentence");
    Rng rng(seed);
    Dataset out;
    out.language = spec.language;
    out.labeled = true;
    out.sentences.reserve(n_sentences);

    const std::size_t n_fw = spec.function_words.size();
    for (std::size_t s = 0; s < n_sentences; ++s) {
        const std::size_t tmpl_idx = rng.below(spec.templates.size());
        const auto& tmpl = spec.templates[tmpl_idx];
        TaggedSentence sent;
        sent.labels.emplace();
        for (std::size_t slot_idx = 0; slot_idx < tmpl.size(); ++slot_idx) {
            const Slot slot = tmpl[slot_idx];
            if (slot == Slot::Fw) {
                // Each (template, slot) position leans on a small fixed slice
                // of the lexicon, the way real function words anchor the
                // phrases around entities ("mr" before a person, "in" before
                // a place). The slice is indexed, not surface-bound, so a
                // template shared across languages anchors to the same
                // lexicon positions and the words transfer exactly where the
                // lexicons overlap.
                const std::size_t anchor = (tmpl_idx * 131 + slot_idx * 31) % n_fw;
                const std::size_t pick = rng.below(4) < 3
                                             ? (anchor + rng.below(kAnchorWidth)) % n_fw
                                             : rng.below(n_fw);
                sent.tokens.push_back(spec.function_words[pick]);
                sent.labels->push_back(Tag::O);
            } else {
                const auto type = static_cast<EntityType>(static_cast<int>(slot) - 1);
                const auto& lexicon = spec.entities[static_cast<std::size_t>(type)];
                std::vector<std::string> toks = split_tokens(lexicon[rng.below(lexicon.size())]);
                for (std::size_t i = 0; i < toks.size(); ++i) {
                    sent.tokens.push_back(std::move(toks[i]));
                    sent.labels->push_back(i == 0 ? begin_tag(type) : inside_tag(type));
                }
            }
        }
        out.sentences.push_back(std::move(sent));
    }
    return out;
}

Dataset read_conll(const std::filesystem::path& path, std::string language) {
    std::ifstream in(path);
    if (!in) throw io_error("read_conll: cannot open " + path.string());
    if (language.empty()) language = path.stem().string();

    Dataset out;
    out.language = std::move(language);
    TaggedSentence current;
    bool saw_labeled_line = false;
    bool saw_unlabeled_line = false;
    std::string line;
    std::size_t line_no = 0;

    auto flush = [&] {
        if (!current.tokens.empty()) {
            out.sentences.push_back(std::move(current));
            current = TaggedSentence{};
        }
    };

    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) {
            flush();
            continue;
        }
        std::vector<std::string> cols = split_tokens(line);
        if (cols.size() == 1) {
            if (saw_labeled_line)
                throw parse_error("read_conll: " + path.string() + ":" + std::to_string(line_no) +
                                  ": expected 2 columns on a labeled line");
            saw_unlabeled_line = true;
            current.tokens.push_back(std::move(cols[0]));
        } else {
            if (saw_unlabeled_line)
                throw parse_error("read_conll: " + path.string() + ":" + std::to_string(line_no) +
                                  ": labeled line in an unlabeled file");
            saw_labeled_line = true;
            auto tag = parse_tag(cols.back());
            if (!tag)
                throw parse_error("read_conll: " + path.string() + ":" + std::to_string(line_no) +
                                  ": unknown tag '" + cols.back() + "'");
            if (!current.labels) current.labels.emplace();
            current.tokens.push_back(std::move(cols[0]));
            current.labels->push_back(*tag);
        }
    }
    flush();
    out.labeled = saw_labeled_line;
    out.validate();
    return out;
}

void write_conll(const Dataset& dataset, const std::filesystem::path& path) {
    dataset.validate();
    std::ofstream out(path, std::ios::binary); // LF line endings everywhere
    if (!out) throw io_error("write_conll: cannot open " + path.string() + " for writing");
    for (const TaggedSentence& s : dataset.sentences) {
        for (std::size_t i = 0; i < s.tokens.size(); ++i) {
            out << s.tokens[i];
            if (dataset.labeled) out << ' ' << tag_name((*s.labels)[i]);
            out << '\n';
        }
        out << '\n';
    }
    if (!out) throw io_error("write_conll: write failed for " + path.string());
}

nlohmann::json spec_to_json(const LanguageSpec& spec) {
    nlohmann::json j;
    j["language"] = spec.language;
    j["function_words"] = spec.function_words;
    nlohmann::json ents;
    for (std::size_t e = 0; e < kNumEntityTypes; ++e)
        ents[std::string(kEntityNames[e])] = spec.entities[e];
    j["entities"] = std::move(ents);
    nlohmann::json tmpls = nlohmann::json::array();
    for (const auto& t : spec.templates) {
        nlohmann::json tj = nlohmann::json::array();
        for (Slot s : t) tj.push_back(std::string(slot_name(s)));
        tmpls.push_back(std::move(tj));
    }
    j["templates"] = std::move(tmpls);
    j["overlap"] = spec.overlap;
    return j;
}

LanguageSpec spec_from_json(const nlohmann::json& j) {
    LanguageSpec spec;
    try {
        spec.language = j.at("language").get<std::string>();
        spec.function_words = j.at("function_words").get<std::vector<std::string>>();
        const auto& ents = j.at("entities");
        for (std::size_t e = 0; e < kNumEntityTypes; ++e)
            spec.entities[e] =
                ents.at(std::string(kEntityNames[e])).get<std::vector<std::string>>();
        for (const auto& tj : j.at("templates")) {
            std::vector<Slot> t;
            for (const auto& sj : tj) {
                auto slot = parse_slot(sj.get<std::string>());
                if (!slot) throw parse_error("spec_from_json: unknown slot '" +
                                             sj.get<std::string>() + "'");
                t.push_back(*slot);
            }
            spec.templates.push_back(std::move(t));
        }
        spec.overlap = j.value("overlap", 1.0);
    } catch (const nlohmann::json::exception& e) {
        throw parse_error(std::string("spec_from_json: ") + e.what());
    }
    spec.validate();
    return spec;
}

void write_spec(const LanguageSpec& spec, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("write_spec: cannot open " + path.string() + " for writing");
    out << spec_to_json(spec).dump(2) << '\n';
}

LanguageSpec read_spec(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw io_error("read_spec: cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw parse_error("read_spec: " + path.string() + ": " + e.what());
    }
    return spec_from_json(j);
}

int Vocab::id(std::string_view token) const {
    auto it = token_to_id.find(std::string(token));
    return it == token_to_id.end() ? kUnknownId : it->second;
}

std::vector<int> Vocab::encode(const TaggedSentence& sentence) const {
    std::vector<int> ids;
    ids.reserve(sentence.tokens.size());
    for (const std::string& t : sentence.tokens) ids.push_back(id(t));
    return ids;
}

Vocab build_vocab(std::span<const Dataset* const> datasets, std::size_t min_count) {
    if (datasets.empty()) throw invalid_input("build_vocab: need at least one dataset");
    std::unordered_map<std::string, std::size_t> counts;
    for (const Dataset* d : datasets)
        for (const TaggedSentence& s : d->sentences)
            for (const std::string& t : s.tokens)
                if (t != Vocab::kBoundaryToken && t != Vocab::kUnknownToken) ++counts[t];

    std::vector<std::pair<std::string, std::size_t>> kept;
    kept.reserve(counts.size());
    for (auto& [tok, c] : counts)
        if (c >= min_count) kept.emplace_back(tok, c);
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    Vocab v;
    v.id_to_token.reserve(kept.size() + 2);
    v.id_to_token.emplace_back(Vocab::kBoundaryToken);
    v.id_to_token.emplace_back(Vocab::kUnknownToken);
    v.token_to_id.emplace(std::string(Vocab::kBoundaryToken), Vocab::kBoundaryId);
    v.token_to_id.emplace(std::string(Vocab::kUnknownToken), Vocab::kUnknownId);
    for (auto& [tok, c] : kept) {
        v.token_to_id.emplace(tok, static_cast<int>(v.id_to_token.size()));
        v.id_to_token.push_back(tok);
    }
    return v;
}

} // namespace xlner
