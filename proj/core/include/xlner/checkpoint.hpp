#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "xlner/ensemble.hpp"
#include "xlner/tagger.hpp"

namespace xlner {

inline constexpr int kCheckpointFormatVersion = 1;

/// Where a checkpoint came from: the run seed and a digest of the
/// generating configuration.
struct Provenance {
    std::uint64_t seed = 0;
    std::string config_digest;

    bool operator==(const Provenance&) const = default;
};

/// Tagger checkpoints: a JSON envelope with one base64 payload per
/// parameter block, each carrying its shape and a content checksum so load
/// failures are loud and specific.
void save_checkpoint(const TaggerParams& params, const Provenance& provenance,
                     const std::filesystem::path& path);

struct LoadedTagger {
    TaggerParams params;
    Provenance provenance;
};

/// Throws checkpoint_error with a kind telling malformed files, unknown
/// versions, shape mismatches, payload-size mismatches, and checksum
/// failures apart. When `expected` is given, the stored geometry must match
/// it; the error names the offending block.
LoadedTagger load_checkpoint(const std::filesystem::path& path,
                             const TaggerConfig* expected = nullptr);

/// Same envelope for the language-ID head.
void save_langid_checkpoint(const LangIdParams& params, const Provenance& provenance,
                            const std::filesystem::path& path);

struct LoadedLangId {
    LangIdParams params;
    Provenance provenance;
};

LoadedLangId load_langid_checkpoint(const std::filesystem::path& path);

} // namespace xlner
