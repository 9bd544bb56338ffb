#include "xlner/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "xlner/rng.hpp"

namespace xlner {

namespace {

constexpr std::string_view kBase64Alphabet =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string base64_encode(std::string_view bytes) {
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 3 <= bytes.size(); i += 3) {
        const std::uint32_t n = (static_cast<std::uint8_t>(bytes[i]) << 16) |
                                (static_cast<std::uint8_t>(bytes[i + 1]) << 8) |
                                static_cast<std::uint8_t>(bytes[i + 2]);
        out += kBase64Alphabet[(n >> 18) & 63];
        out += kBase64Alphabet[(n >> 12) & 63];
        out += kBase64Alphabet[(n >> 6) & 63];
        out += kBase64Alphabet[n & 63];
    }
    const std::size_t rest = bytes.size() - i;
    if (rest == 1) {
        const std::uint32_t n = static_cast<std::uint8_t>(bytes[i]) << 16;
        out += kBase64Alphabet[(n >> 18) & 63];
        out += kBase64Alphabet[(n >> 12) & 63];
        out += "==";
    } else if (rest == 2) {
        const std::uint32_t n = (static_cast<std::uint8_t>(bytes[i]) << 16) |
                                (static_cast<std::uint8_t>(bytes[i + 1]) << 8);
        out += kBase64Alphabet[(n >> 18) & 63];
        out += kBase64Alphabet[(n >> 12) & 63];
        out += kBase64Alphabet[(n >> 6) & 63];
        out += '=';
    }
    return out;
}

std::string base64_decode(std::string_view text) {
    std::array<int, 256> lookup;
    lookup.fill(-1);
    for (std::size_t i = 0; i < kBase64Alphabet.size(); ++i)
        lookup[static_cast<unsigned char>(kBase64Alphabet[i])] = static_cast<int>(i);

    if (text.size() % 4 != 0)
        throw checkpoint_error(checkpoint_error::kind::malformed,
                               "base64 payload length is not a multiple of 4");
    std::string out;
    out.reserve(text.size() / 4 * 3);
    for (std::size_t i = 0; i < text.size(); i += 4) {
        int vals[4];
        int pad = 0;
        for (std::size_t j = 0; j < 4; ++j) {
            const char c = text[i + j];
            if (c == '=' && i + 4 == text.size() && j >= 2) {
                vals[j] = 0;
                ++pad;
            } else {
                vals[j] = lookup[static_cast<unsigned char>(c)];
                if (vals[j] < 0 || pad > 0)
                    throw checkpoint_error(checkpoint_error::kind::malformed,
                                           "invalid base64 character in payload");
            }
        }
        const std::uint32_t n = (static_cast<std::uint32_t>(vals[0]) << 18) |
                                (static_cast<std::uint32_t>(vals[1]) << 12) |
                                (static_cast<std::uint32_t>(vals[2]) << 6) |
                                static_cast<std::uint32_t>(vals[3]);
        out += static_cast<char>((n >> 16) & 0xff);
        if (pad < 2) out += static_cast<char>((n >> 8) & 0xff);
        if (pad < 1) out += static_cast<char>(n & 0xff);
    }
    return out;
}

std::string tensor_bytes(const Tensor& t) {
    std::string bytes(t.size() * sizeof(double), '\0');
    for (std::size_t i = 0; i < t.size(); ++i) {
        std::uint64_t u = std::bit_cast<std::uint64_t>(t.data[i]);
        for (std::size_t b = 0; b < 8; ++b)
            bytes[i * 8 + b] = static_cast<char>((u >> (8 * b)) & 0xff); // little-endian
    }
    return bytes;
}

void bytes_to_tensor(std::string_view bytes, Tensor& t) {
    for (std::size_t i = 0; i < t.size(); ++i) {
        std::uint64_t u = 0;
        for (std::size_t b = 0; b < 8; ++b)
            u |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(bytes[i * 8 + b]))
                 << (8 * b);
        t.data[i] = std::bit_cast<double>(u);
    }
}

nlohmann::json block_to_json(std::string_view name, const Tensor& t) {
    const std::string bytes = tensor_bytes(t);
    return nlohmann::json{{"name", std::string(name)},
                          {"shape", t.shape},
                          {"checksum", hex64(fnv1a(bytes))},
                          {"data", base64_encode(bytes)}};
}

nlohmann::json envelope(std::string_view kind, const Provenance& provenance) {
    return nlohmann::json{{"format_version", kCheckpointFormatVersion},
                          {"kind", std::string(kind)},
                          {"provenance",
                           {{"seed", provenance.seed}, {"config_digest", provenance.config_digest}}}};
}

void write_json(const nlohmann::json& j, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("save checkpoint: cannot open " + path.string() + " for writing");
    out << j.dump(2) << '\n';
    if (!out) throw io_error("save checkpoint: write failed for " + path.string());
}

nlohmann::json read_envelope(const std::filesystem::path& path, std::string_view expected_kind) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw checkpoint_error(checkpoint_error::kind::malformed,
                               "cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw checkpoint_error(checkpoint_error::kind::malformed,
                               path.string() + ": " + e.what());
    }
    if (!j.contains("format_version") || !j["format_version"].is_number_integer())
        throw checkpoint_error(checkpoint_error::kind::malformed, "missing format_version");
    if (j["format_version"].get<int>() != kCheckpointFormatVersion)
        throw checkpoint_error(checkpoint_error::kind::bad_version,
                               "unrecognized checkpoint format version " +
                                   j["format_version"].dump());
    if (j.value("kind", "") != expected_kind)
        throw checkpoint_error(checkpoint_error::kind::malformed,
                               "expected a '" + std::string(expected_kind) + "' checkpoint");
    if (!j.contains("blocks") || !j["blocks"].is_array())
        throw checkpoint_error(checkpoint_error::kind::malformed, "missing blocks array");
    return j;
}

Provenance provenance_from(const nlohmann::json& j) {
    Provenance p;
    if (j.contains("provenance")) {
        p.seed = j["provenance"].value("seed", std::uint64_t{0});
        p.config_digest = j["provenance"].value("config_digest", std::string{});
    }
    return p;
}

/// Decode one named block into `t` (already shaped when `expected_shape` is
/// given, otherwise reshaped from the stored shape).
void load_block(const nlohmann::json& blocks, std::string_view name, Tensor& t,
                const std::vector<std::size_t>* expected_shape) {
    const nlohmann::json* found = nullptr;
    for (const auto& b : blocks)
        if (b.value("name", "") == name) {
            found = &b;
            break;
        }
    if (!found)
        throw checkpoint_error(checkpoint_error::kind::malformed,
                               "missing block '" + std::string(name) + "'");
    const nlohmann::json& b = *found;
    std::vector<std::size_t> shape;
    try {
        shape = b.at("shape").get<std::vector<std::size_t>>();
    } catch (const nlohmann::json::exception&) {
        throw checkpoint_error(checkpoint_error::kind::malformed,
                               "block '" + std::string(name) + "' has a malformed shape");
    }
    if (expected_shape && shape != *expected_shape)
        throw checkpoint_error(checkpoint_error::kind::shape_mismatch,
                               "block '" + std::string(name) +
                                   "' does not match the expected geometry");
    const std::string bytes = base64_decode(b.value("data", ""));
    t = Tensor::zeros(shape);
    if (bytes.size() != t.size() * sizeof(double))
        throw checkpoint_error(checkpoint_error::kind::payload_mismatch,
                               "block '" + std::string(name) +
                                   "' payload size disagrees with its shape");
    if (b.contains("checksum") && b["checksum"].get<std::string>() != hex64(fnv1a(bytes)))
        throw checkpoint_error(checkpoint_error::kind::corrupt,
                               "block '" + std::string(name) + "' failed its checksum");
    bytes_to_tensor(bytes, t);
}

} // namespace

void save_checkpoint(const TaggerParams& params, const Provenance& provenance,
                     const std::filesystem::path& path) {
    const TaggerConfig cfg = params.config(); // validates geometry
    nlohmann::json j = envelope("tagger", provenance);
    j["config"] = {{"vocab_size", cfg.vocab_size},
                   {"embedding_dim", cfg.embedding_dim},
                   {"context_radius", cfg.context_radius},
                   {"hidden_dim", cfg.hidden_dim}};
    nlohmann::json blocks = nlohmann::json::array();
    const auto tensors = params.blocks();
    for (std::size_t i = 0; i < TaggerParams::num_blocks; ++i)
        blocks.push_back(block_to_json(TaggerParams::block_names[i], *tensors[i]));
    j["blocks"] = std::move(blocks);
    write_json(j, path);
}

LoadedTagger load_checkpoint(const std::filesystem::path& path, const TaggerConfig* expected) {
    const nlohmann::json j = read_envelope(path, "tagger");

    TaggerConfig cfg;
    try {
        const auto& c = j.at("config");
        cfg.vocab_size = c.at("vocab_size").get<std::size_t>();
        cfg.embedding_dim = c.at("embedding_dim").get<std::size_t>();
        cfg.context_radius = c.at("context_radius").get<std::size_t>();
        cfg.hidden_dim = c.at("hidden_dim").get<std::size_t>();
    } catch (const nlohmann::json::exception&) {
        throw checkpoint_error(checkpoint_error::kind::malformed, "malformed tagger config");
    }
    if (expected && !(cfg == *expected))
        throw checkpoint_error(checkpoint_error::kind::shape_mismatch,
                               "stored tagger config disagrees with the expected one");

    LoadedTagger out;
    out.provenance = provenance_from(j);
    out.params = TaggerParams::zeros(cfg);
    const auto tensors = out.params.blocks();
    for (std::size_t i = 0; i < TaggerParams::num_blocks; ++i) {
        const std::vector<std::size_t> want = tensors[i]->shape;
        load_block(j["blocks"], TaggerParams::block_names[i], *tensors[i], &want);
    }
    return out;
}

void save_langid_checkpoint(const LangIdParams& params, const Provenance& provenance,
                            const std::filesystem::path& path) {
    params.validate();
    nlohmann::json j = envelope("langid", provenance);
    nlohmann::json blocks = nlohmann::json::array();
    blocks.push_back(block_to_json("embedding_table", params.embedding_table));
    blocks.push_back(block_to_json("u", params.u));
    blocks.push_back(block_to_json("v", params.v));
    blocks.push_back(block_to_json("lang_embed", params.lang_embed));
    j["blocks"] = std::move(blocks);
    write_json(j, path);
}

LoadedLangId load_langid_checkpoint(const std::filesystem::path& path) {
    const nlohmann::json j = read_envelope(path, "langid");
    LoadedLangId out;
    out.provenance = provenance_from(j);
    load_block(j["blocks"], "embedding_table", out.params.embedding_table, nullptr);
    load_block(j["blocks"], "u", out.params.u, nullptr);
    load_block(j["blocks"], "v", out.params.v, nullptr);
    load_block(j["blocks"], "lang_embed", out.params.lang_embed, nullptr);
    try {
        out.params.validate();
    } catch (const invalid_input& e) {
        throw checkpoint_error(checkpoint_error::kind::shape_mismatch, e.what());
    }
    return out;
}

} // namespace xlner
