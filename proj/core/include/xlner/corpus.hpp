#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "xlner/error.hpp"

namespace xlner {

inline constexpr std::size_t kNumLabels = 9;
inline constexpr std::size_t kNumEntityTypes = 4;

/// BIO tags over the four entity types. The numeric order fixes the label
/// indexing used everywhere (probability vectors, argmax tie-breaks).
enum class Tag : std::uint8_t {
    O = 0,
    BPer, IPer,
    BLoc, ILoc,
    BOrg, IOrg,
    BMisc, IMisc,
};

enum class EntityType : std::uint8_t { Per = 0, Loc, Org, Misc };

std::string_view tag_name(Tag t);
std::optional<Tag> parse_tag(std::string_view s);
std::string_view entity_type_name(EntityType t);

inline bool is_begin(Tag t) { return t != Tag::O && (static_cast<int>(t) % 2 == 1); }
inline bool is_inside(Tag t) { return t != Tag::O && (static_cast<int>(t) % 2 == 0); }
/// Entity type of a non-O tag; undefined for O.
inline EntityType tag_entity_type(Tag t) {
    return static_cast<EntityType>((static_cast<int>(t) - 1) / 2);
}
inline Tag begin_tag(EntityType e) { return static_cast<Tag>(1 + 2 * static_cast<int>(e)); }
inline Tag inside_tag(EntityType e) { return static_cast<Tag>(2 + 2 * static_cast<int>(e)); }

/// A token sequence with optional BIO labels of equal length.
struct TaggedSentence {
    std::vector<std::string> tokens;
    std::optional<std::vector<Tag>> labels;

    std::size_t size() const { return tokens.size(); }
    bool operator==(const TaggedSentence&) const = default;
};

/// A homogeneous collection of sentences: all labeled or all unlabeled.
struct Dataset {
    std::string language;
    std::vector<TaggedSentence> sentences;
    bool labeled = false;

    /// Throws invalid_input if the labeled flag disagrees with the sentences
    /// or any sentence is malformed.
    void validate() const;

    Dataset without_labels() const;
    std::size_t token_count() const;

    bool operator==(const Dataset&) const = default;
};

/// Sentence-template slot: a function word or an entity of a given type.
enum class Slot : std::uint8_t { Fw = 0, Per, Loc, Org, Misc };

std::string_view slot_name(Slot s);
std::optional<Slot> parse_slot(std::string_view s);

/// Everything needed to sample a synthetic language: lexicons, templates,
/// and the configured lexical overlap with the designated target language.
struct LanguageSpec {
    std::string language;
    std::vector<std::string> function_words;
    /// Indexed by EntityType; each entry is a space-separated multi-token name.
    std::array<std::vector<std::string>, kNumEntityTypes> entities;
    std::vector<std::vector<Slot>> templates;
    double overlap = 1.0;

    void validate() const;
    bool operator==(const LanguageSpec&) const = default;
};

struct SpecSizes {
    std::size_t function_words = 60;
    std::size_t names_per_type = 40;
    std::size_t templates = 10;
};

/// Fresh language built from scratch (used for the target language).
LanguageSpec make_language_spec(const std::string& language, const SpecSizes& sizes,
                                std::uint64_t seed);

/// Language related to `target` at the given lexical overlap: it shares the
/// leading overlap-fraction of the target's function words and templates,
/// keeps the target's entity names on an overlap fraction, and marks the
/// rest with a language-specific token suffix.
LanguageSpec derive_language_spec(const LanguageSpec& target, const std::string& language,
                                  double overlap, std::uint64_t seed);

/// Sample a labeled corpus from the spec. Deterministic in (spec, n, seed).
Dataset generate_corpus(const LanguageSpec& spec, std::size_t n_sentences, std::uint64_t seed);

/// CoNLL text format: one token per line, the tag in the last column of a
/// single-space-separated row; a blank line ends a sentence; unlabeled data
/// has one column. The `language` argument defaults to the file stem.
Dataset read_conll(const std::filesystem::path& path, std::string language = "");
void write_conll(const Dataset& dataset, const std::filesystem::path& path);

nlohmann::json spec_to_json(const LanguageSpec& spec);
LanguageSpec spec_from_json(const nlohmann::json& j);
void write_spec(const LanguageSpec& spec, const std::filesystem::path& path);
LanguageSpec read_spec(const std::filesystem::path& path);

/// Shared token vocabulary with two reserved ids.
struct Vocab {
    static constexpr int kBoundaryId = 0;
    static constexpr int kUnknownId = 1;
    static constexpr std::string_view kBoundaryToken = "<pad>";
    static constexpr std::string_view kUnknownToken = "<unk>";

    std::vector<std::string> id_to_token;
    std::unordered_map<std::string, int> token_to_id;

    std::size_t size() const { return id_to_token.size(); }
    int id(std::string_view token) const;
    std::vector<int> encode(const TaggedSentence& sentence) const;
};

/// One vocabulary over every dataset, content ids ordered by descending
/// count then token. Tokens below min_count resolve to the unknown id.
Vocab build_vocab(std::span<const Dataset* const> datasets, std::size_t min_count);

} // namespace xlner
