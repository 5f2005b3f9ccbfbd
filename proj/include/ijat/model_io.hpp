#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ijat/encoder.hpp"
#include "ijat/error.hpp"

namespace ijat {

namespace detail {

inline std::uint32_t crc32(const unsigned char* data, std::size_t len,
                           std::uint32_t crc = 0) {
    static const auto table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) {
                c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
            }
            t[i] = c;
        }
        return t;
    }();
    crc = ~crc;
    for (std::size_t i = 0; i < len; ++i) {
        crc = table[(crc ^ data[i]) & 0xffu] ^ (crc >> 8);
    }
    return ~crc;
}

}  // namespace detail

// Model file layout (little endian):
//   bytes 0..3   magic "IJAT"
//   bytes 4..7   format version (u32)
//   bytes 8..11  header length H (u32)
//   H bytes      JSON header: config, vocab, weight manifest
//   f64 blobs    weights, in manifest order
//   last 4 bytes CRC32 over everything before it
class ModelCodec {
  public:
    static constexpr std::uint32_t kFormatVersion = 1;

    static void save(const SiameseEncoder& model, const std::string& path) {
        std::vector<unsigned char> buf;
        append_raw(buf, "IJAT", 4);
        append_u32(buf, kFormatVersion);

        nlohmann::ordered_json header;
        const EncoderConfig& c = model.config();
        header["config"] = {
            {"num_layers", c.num_layers}, {"model_dim", c.model_dim},
            {"num_heads", c.num_heads},   {"ffn_dim", c.ffn_dim},
            {"max_seq_len", c.max_seq_len},
            {"pooling", "mean"},          {"head", to_string(c.head)},
            {"shift_mode", to_string(c.shift_mode)},
            {"seed", c.seed},
        };
        header["vocab"] = model.vocab().tokens();
        nlohmann::ordered_json manifest = nlohmann::ordered_json::array();
        auto weights = model.weights();
        for (const auto& [name, t] : weights) {
            manifest.push_back({{"name", name}, {"shape", t->shape()}});
        }
        header["weights"] = manifest;
        std::string hs = header.dump();
        append_u32(buf, static_cast<std::uint32_t>(hs.size()));
        append_raw(buf, hs.data(), hs.size());

        for (const auto& [name, t] : weights) {
            append_raw(buf, t->data(), t->numel() * sizeof(double));
        }
        append_u32(buf, detail::crc32(buf.data(), buf.size()));

        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write model file: " + path);
        out.write(reinterpret_cast<const char*>(buf.data()),
                  static_cast<std::streamsize>(buf.size()));
        if (!out) throw IoError("short write: " + path);
    }

    static SiameseEncoder load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot read model file: " + path);
        std::vector<unsigned char> buf(
            (std::istreambuf_iterator<char>(in)),
            std::istreambuf_iterator<char>());
        if (buf.size() < 16) throw TruncatedFileError("model file too short");

        std::uint32_t stored_crc = read_u32(buf, buf.size() - 4);
        std::uint32_t actual_crc = detail::crc32(buf.data(), buf.size() - 4);
        if (stored_crc != actual_crc) {
            throw ChecksumError("model checksum mismatch in " + path);
        }
        if (std::memcmp(buf.data(), "IJAT", 4) != 0) {
            throw IoError("not a model file: " + path);
        }
        std::uint32_t version = read_u32(buf, 4);
        if (version != kFormatVersion) {
            throw FormatVersionError(
                "model format version " + std::to_string(version) +
                " unsupported (expected " + std::to_string(kFormatVersion) +
                ")");
        }
        std::uint32_t hlen = read_u32(buf, 8);
        if (12 + static_cast<std::size_t>(hlen) + 4 > buf.size()) {
            throw TruncatedFileError("model header truncated");
        }
        nlohmann::json header = nlohmann::json::parse(
            buf.begin() + 12, buf.begin() + 12 + hlen, nullptr, true);

        EncoderConfig config;
        const auto& jc = header.at("config");
        config.num_layers = jc.at("num_layers").get<int>();
        config.model_dim = jc.at("model_dim").get<int>();
        config.num_heads = jc.at("num_heads").get<int>();
        config.ffn_dim = jc.at("ffn_dim").get<int>();
        config.max_seq_len = jc.at("max_seq_len").get<int>();
        std::string head = jc.at("head").get<std::string>();
        config.head =
            head == "dot" ? SimilarityHead::kDot : SimilarityHead::kCosine;
        std::string shift = jc.at("shift_mode").get<std::string>();
        config.shift_mode = shift == "reference_shift"
                                ? ShiftMode::kReferenceShift
                                : ShiftMode::kNone;
        config.seed = jc.at("seed").get<std::uint64_t>();

        Vocab vocab;
        auto tokens = header.at("vocab").get<std::vector<std::string>>();
        for (std::size_t i = kNumSpecialIds; i < tokens.size(); ++i) {
            vocab.add(tokens[i]);
        }

        SiameseEncoder model(config, vocab);
        std::size_t off = 12 + hlen;
        auto named = model.named_weights();
        const auto& manifest = header.at("weights");
        if (manifest.size() != named.size()) {
            throw IoError("weight manifest size mismatch");
        }
        for (std::size_t w = 0; w < named.size(); ++w) {
            auto& [name, tensor] = named[w];
            if (manifest[w].at("name").get<std::string>() != name) {
                throw IoError("weight order mismatch at " + name);
            }
            auto shape =
                manifest[w].at("shape").get<std::vector<std::size_t>>();
            Tensor t(shape);
            std::size_t bytes = t.numel() * sizeof(double);
            if (off + bytes + 4 > buf.size()) {
                throw TruncatedFileError("weight data truncated at " + name);
            }
            std::memcpy(t.data(), buf.data() + off, bytes);
            off += bytes;
            *tensor = std::move(t);
        }
        if (off + 4 != buf.size()) {
            throw TruncatedFileError("trailing bytes after weights");
        }
        return model;
    }

  private:
    static void append_raw(std::vector<unsigned char>& buf, const void* p,
                           std::size_t n) {
        const auto* b = static_cast<const unsigned char*>(p);
        buf.insert(buf.end(), b, b + n);
    }

    static void append_u32(std::vector<unsigned char>& buf, std::uint32_t v) {
        for (int i = 0; i < 4; ++i) {
            buf.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xffu));
        }
    }

    static std::uint32_t read_u32(const std::vector<unsigned char>& buf,
                                  std::size_t off) {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(buf[off + i]) << (8 * i);
        }
        return v;
    }
};

// Accepts either a model file or a directory containing model.ijat.
inline std::string resolve_model_path(const std::string& path) {
    namespace fs = std::filesystem;
    if (fs::is_directory(path)) {
        return (fs::path(path) / "model.ijat").string();
    }
    return path;
}

inline SiameseEncoder load_model(const std::string& path) {
    return ModelCodec::load(resolve_model_path(path));
}

inline void save_model(const SiameseEncoder& model, const std::string& path) {
    ModelCodec::save(model, resolve_model_path(path));
}

}  // namespace ijat
