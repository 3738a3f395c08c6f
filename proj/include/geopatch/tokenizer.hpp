#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace geopatch {

using TokenId = std::int32_t;

// Byte-level BPE vocabulary in the GPT-2 distribution format. Token strings
// are stored in the byte-to-unicode mapped alphabet (space is "Ġ", etc.).
struct Vocab {
    std::unordered_map<std::string, TokenId> token_to_id;
    std::vector<std::string> id_to_token;
    std::vector<std::pair<std::string, std::string>> merges; // index = rank

    std::size_t size() const { return id_to_token.size(); }
    int merge_rank(std::string_view left, std::string_view right) const; // -1 if absent

    std::unordered_map<std::string, int> rank_index; // "left right" -> rank
};

Vocab load_vocab(std::istream& vocab_json, std::istream& merges_txt);
Vocab load_vocab(const std::filesystem::path& vocab_json, const std::filesystem::path& merges_txt);

// Builds a Vocab from in-memory parts; same validation as load_vocab.
Vocab make_vocab(std::unordered_map<std::string, TokenId> token_to_id,
                 std::vector<std::pair<std::string, std::string>> merges);

void write_vocab(const Vocab& vocab, std::ostream& vocab_json, std::ostream& merges_txt);

struct ByteSpan {
    std::size_t begin = 0;
    std::size_t end = 0;
    friend bool operator==(const ByteSpan&, const ByteSpan&) = default;
};

struct TokenSeq {
    std::vector<TokenId> ids;
    std::vector<ByteSpan> offsets; // byte span of each token in the source text

    std::size_t size() const { return ids.size(); }
};

// GPT-2 pre-tokenizer split, as byte spans into text.
std::vector<ByteSpan> pretokenize(std::string_view text);

// Byte <-> printable unicode mapping used by byte-level BPE vocabularies.
std::string byte_to_symbol(unsigned char byte);

TokenSeq encode(const Vocab& vocab, std::string_view text);
std::string decode(const Vocab& vocab, std::span<const TokenId> ids);

// Human-readable token text (mapped alphabet undone), for labels.
std::string token_text(const Vocab& vocab, TokenId id);

// Absolute-position correspondence between a clean and a corrupted prompt.
// Corrupted position p is patched from clean position p. Positions from
// report_begin (the last shared token) to clean_len - 1 are reported; only
// those at or past divergence_index can actually differ.
struct TokenAlignment {
    std::size_t divergence_index = 0;
    std::size_t report_begin = 0;
    std::vector<std::size_t> patchable_positions;
    std::size_t clean_len = 0;
    std::size_t corrupted_len = 0;

    std::size_t report_width() const { return clean_len - report_begin; }
    std::size_t position_of_offset(std::size_t offset) const { return report_begin + offset; }
};

TokenAlignment align(const TokenSeq& clean, const TokenSeq& corrupted);

// Same, with the reporting range anchored at a known shared position (the
// last token of a template prefix) instead of divergence_index - 1.
TokenAlignment align(const TokenSeq& clean, const TokenSeq& corrupted, std::size_t anchor);

} // namespace geopatch
