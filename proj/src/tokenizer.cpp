#include "geopatch/tokenizer.hpp"

#include "geopatch/error.hpp"

#include "json.hpp"

#include <array>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace geopatch {
namespace {

void append_utf8(std::string& out, std::uint32_t cp) {
    if (cp < 0x80) {
        out += static_cast<char>(cp);
    } else if (cp < 0x800) {
        out += static_cast<char>(0xC0 | (cp >> 6));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else if (cp < 0x10000) {
        out += static_cast<char>(0xE0 | (cp >> 12));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else {
        out += static_cast<char>(0xF0 | (cp >> 18));
        out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    }
}

struct CodePoint {
    std::uint32_t cp;
    std::size_t begin; // byte offset
    std::size_t len;   // byte length
};

// Malformed sequences decode to one pseudo code point per byte.
std::vector<CodePoint> decode_utf8(std::string_view s) {
    std::vector<CodePoint> out;
    out.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size()) {
        const auto c = static_cast<unsigned char>(s[i]);
        std::size_t len = 1;
        std::uint32_t cp = c;
        if (c >= 0xC0 && c < 0xE0) {
            len = 2;
            cp = c & 0x1F;
        } else if (c >= 0xE0 && c < 0xF0) {
            len = 3;
            cp = c & 0x0F;
        } else if (c >= 0xF0 && c < 0xF8) {
            len = 4;
            cp = c & 0x07;
        }
        bool ok = len == 1 ? c < 0x80 : i + len <= s.size();
        for (std::size_t k = 1; ok && k < len; ++k) {
            const auto cc = static_cast<unsigned char>(s[i + k]);
            if ((cc & 0xC0) != 0x80) ok = false;
            cp = (cp << 6) | (cc & 0x3F);
        }
        if (!ok) {
            len = 1;
            cp = 0xE000 + c; // private use: classified as "other"
        }
        out.push_back({cp, i, len});
        i += len;
    }
    return out;
}

bool is_space(std::uint32_t cp) {
    return (cp >= 0x09 && cp <= 0x0D) || cp == 0x20 || cp == 0x85 || cp == 0xA0 || cp == 0x1680 ||
           (cp >= 0x2000 && cp <= 0x200A) || cp == 0x2028 || cp == 0x2029 || cp == 0x202F || cp == 0x205F ||
           cp == 0x3000;
}

bool is_number(std::uint32_t cp) {
    return (cp >= '0' && cp <= '9') || cp == 0xB2 || cp == 0xB3 || cp == 0xB9 || (cp >= 0xBC && cp <= 0xBE) ||
           (cp >= 0x660 && cp <= 0x669) || (cp >= 0x6F0 && cp <= 0x6F9) || (cp >= 0x966 && cp <= 0x96F) ||
           (cp >= 0x2150 && cp <= 0x218B) || (cp >= 0x2460 && cp <= 0x249B) || (cp >= 0xFF10 && cp <= 0xFF19);
}

// Approximates \p{L}: Latin ranges exactly, other scripts by excluding the
// common punctuation, symbol, and combining-mark blocks.
bool is_letter(std::uint32_t cp) {
    if (cp < 0x80) return (cp >= 'A' && cp <= 'Z') || (cp >= 'a' && cp <= 'z');
    if (cp < 0xC0) return cp == 0xAA || cp == 0xB5 || cp == 0xBA;
    if (cp == 0xD7 || cp == 0xF7) return false;
    if (cp < 0x2B0) return true;
    if (cp < 0x370) return false; // modifier letters, combining marks
    if (is_space(cp) || is_number(cp)) return false;
    if (cp >= 0x2000 && cp <= 0x2BFF) return false;
    if (cp >= 0x3000 && cp <= 0x303F) return false;
    if (cp >= 0xE000 && cp <= 0xF8FF) return false;
    if (cp >= 0xFE00 && cp <= 0xFE6F) return false;
    if (cp >= 0xFF00 && cp <= 0xFF20) return false;
    if (cp >= 0x1F000) return false;
    return true;
}

enum class CharClass { letter, number, space, other };

CharClass classify(std::uint32_t cp) {
    if (is_letter(cp)) return CharClass::letter;
    if (is_number(cp)) return CharClass::number;
    if (is_space(cp)) return CharClass::space;
    return CharClass::other;
}

const std::array<std::string, 256>& byte_symbols() {
    static const std::array<std::string, 256> table = [] {
        std::array<std::string, 256> t;
        std::uint32_t next = 256;
        for (unsigned b = 0; b < 256; ++b) {
            const bool printable = (b >= 33 && b <= 126) || (b >= 161 && b <= 172) || (b >= 174 && b <= 255);
            append_utf8(t[b], printable ? b : next++);
        }
        return t;
    }();
    return table;
}

const std::unordered_map<std::string, unsigned char>& symbol_bytes() {
    static const std::unordered_map<std::string, unsigned char> table = [] {
        std::unordered_map<std::string, unsigned char> t;
        const auto& sym = byte_symbols();
        for (unsigned b = 0; b < 256; ++b) t.emplace(sym[b], static_cast<unsigned char>(b));
        return t;
    }();
    return table;
}

std::string pair_key(std::string_view left, std::string_view right) {
    std::string key;
    key.reserve(left.size() + right.size() + 1);
    key.append(left);
    key += ' ';
    key.append(right);
    return key;
}

} // namespace

std::string byte_to_symbol(unsigned char byte) { return byte_symbols()[byte]; }

int Vocab::merge_rank(std::string_view left, std::string_view right) const {
    const auto it = rank_index.find(pair_key(left, right));
    return it == rank_index.end() ? -1 : it->second;
}

Vocab make_vocab(std::unordered_map<std::string, TokenId> token_to_id,
                 std::vector<std::pair<std::string, std::string>> merges) {
    Vocab v;
    v.id_to_token.resize(token_to_id.size());
    std::vector<bool> seen(token_to_id.size(), false);
    for (const auto& [token, id] : token_to_id) {
        if (id < 0 || static_cast<std::size_t>(id) >= token_to_id.size()) {
            throw Error(ErrorKind::MalformedVocab,
                        "token id " + std::to_string(id) + " outside contiguous range 0.." +
                            std::to_string(token_to_id.size() - 1));
        }
        if (seen[static_cast<std::size_t>(id)]) {
            throw Error(ErrorKind::MalformedVocab, "duplicate token id " + std::to_string(id));
        }
        seen[static_cast<std::size_t>(id)] = true;
        v.id_to_token[static_cast<std::size_t>(id)] = token;
    }
    v.token_to_id = std::move(token_to_id);

    for (std::size_t rank = 0; rank < merges.size(); ++rank) {
        const auto& [left, right] = merges[rank];
        for (const auto* part : {&left, &right}) {
            if (!v.token_to_id.contains(*part)) {
                throw Error(ErrorKind::MalformedMerges,
                            "merge " + std::to_string(rank) + " references unknown symbol '" + *part + "'");
            }
        }
        // First occurrence wins if a pair is listed twice.
        v.rank_index.emplace(pair_key(left, right), static_cast<int>(rank));
    }
    v.merges = std::move(merges);
    return v;
}

Vocab load_vocab(std::istream& vocab_json, std::istream& merges_txt) {
    std::unordered_map<std::string, TokenId> token_to_id;
    std::unordered_map<TokenId, std::string> by_id;
    try {
        const auto doc = nlohmann::json::parse(vocab_json);
        if (!doc.is_object()) throw Error(ErrorKind::MalformedVocab, "vocab JSON is not an object");
        for (const auto& [token, value] : doc.items()) {
            if (!value.is_number_integer()) {
                throw Error(ErrorKind::MalformedVocab, "vocab entry '" + token + "' is not an integer id");
            }
            const auto id = value.get<std::int64_t>();
            if (id < 0 || id > std::numeric_limits<TokenId>::max()) {
                throw Error(ErrorKind::MalformedVocab, "vocab id out of range for '" + token + "'");
            }
            const auto [it, inserted] = by_id.emplace(static_cast<TokenId>(id), token);
            if (!inserted) {
                throw Error(ErrorKind::MalformedVocab, "duplicate token id " + std::to_string(id) + " ('" +
                                                           it->second + "' and '" + token + "')");
            }
            token_to_id.emplace(token, static_cast<TokenId>(id));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::MalformedVocab, std::string("vocab JSON: ") + e.what());
    }

    std::vector<std::pair<std::string, std::string>> merges;
    std::string line;
    bool first = true;
    while (std::getline(merges_txt, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (first && line.starts_with("#version")) {
            first = false;
            continue;
        }
        first = false;
        if (line.empty()) continue;
        const auto sp = line.find(' ');
        if (sp == std::string::npos || sp == 0 || sp + 1 == line.size() ||
            line.find(' ', sp + 1) != std::string::npos) {
            throw Error(ErrorKind::MalformedMerges, "merge line '" + line + "' is not a space-separated pair");
        }
        merges.emplace_back(line.substr(0, sp), line.substr(sp + 1));
    }
    return make_vocab(std::move(token_to_id), std::move(merges));
}

Vocab load_vocab(const std::filesystem::path& vocab_json, const std::filesystem::path& merges_txt) {
    std::ifstream vj(vocab_json, std::ios::binary);
    if (!vj) throw Error(ErrorKind::Io, "cannot open " + vocab_json.string());
    std::ifstream mt(merges_txt, std::ios::binary);
    if (!mt) throw Error(ErrorKind::Io, "cannot open " + merges_txt.string());
    return load_vocab(vj, mt);
}

void write_vocab(const Vocab& vocab, std::ostream& vocab_json, std::ostream& merges_txt) {
    nlohmann::ordered_json doc = nlohmann::ordered_json::object();
    for (std::size_t id = 0; id < vocab.id_to_token.size(); ++id) doc[vocab.id_to_token[id]] = id;
    vocab_json << doc.dump() << '\n';
    merges_txt << "#version: 0.2\n";
    for (const auto& [left, right] : vocab.merges) merges_txt << left << ' ' << right << '\n';
}

// 's|'t|'re|'ve|'m|'ll|'d| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+
std::vector<ByteSpan> pretokenize(std::string_view text) {
    const auto cps = decode_utf8(text);
    const std::size_t n = cps.size();
    std::vector<ByteSpan> out;
    auto emit = [&](std::size_t from, std::size_t to) {
        out.push_back({cps[from].begin, cps[to - 1].begin + cps[to - 1].len});
    };
    auto run_of = [&](std::size_t from, CharClass cls) {
        std::size_t k = from;
        while (k < n && classify(cps[k].cp) == cls) ++k;
        return k;
    };

    std::size_t i = 0;
    while (i < n) {
        const std::uint32_t c = cps[i].cp;
        if (c == '\'' && i + 1 < n) {
            const std::uint32_t a = cps[i + 1].cp;
            if (a == 's' || a == 't' || a == 'm' || a == 'd') {
                emit(i, i + 2);
                i += 2;
                continue;
            }
            if (i + 2 < n) {
                const std::uint32_t b = cps[i + 2].cp;
                if ((a == 'r' && b == 'e') || (a == 'v' && b == 'e') || (a == 'l' && b == 'l')) {
                    emit(i, i + 3);
                    i += 3;
                    continue;
                }
            }
        }

        std::size_t start = i;
        std::size_t body = i;
        if (c == ' ' && i + 1 < n && classify(cps[i + 1].cp) != CharClass::space) body = i + 1;
        const CharClass cls = classify(cps[body].cp);
        if (cls != CharClass::space) {
            const std::size_t end = run_of(body, cls);
            emit(start, end);
            i = end;
            continue;
        }

        const std::size_t end = run_of(i, CharClass::space);
        if (end == n || end - i == 1) {
            emit(i, end);
            i = end;
        } else {
            emit(i, end - 1); // leave one space to prefix the next word
            i = end - 1;
        }
    }
    return out;
}

TokenSeq encode(const Vocab& vocab, std::string_view text) {
    TokenSeq seq;
    const auto& sym = byte_symbols();

    struct Piece {
        std::string symbol;
        std::size_t bytes;
    };
    std::vector<Piece> word;

    for (const ByteSpan span : pretokenize(text)) {
        word.clear();
        for (std::size_t b = span.begin; b < span.end; ++b) {
            word.push_back({sym[static_cast<unsigned char>(text[b])], 1});
        }

        while (word.size() > 1) {
            int best = -1;
            for (std::size_t k = 0; k + 1 < word.size(); ++k) {
                const int r = vocab.merge_rank(word[k].symbol, word[k + 1].symbol);
                if (r >= 0 && (best < 0 || r < best)) best = r;
            }
            if (best < 0) break;
            const auto& [left, right] = vocab.merges[static_cast<std::size_t>(best)];
            std::vector<Piece> merged;
            merged.reserve(word.size());
            for (std::size_t k = 0; k < word.size(); ++k) {
                if (k + 1 < word.size() && word[k].symbol == left && word[k + 1].symbol == right) {
                    merged.push_back({left + right, word[k].bytes + word[k + 1].bytes});
                    ++k;
                } else {
                    merged.push_back(std::move(word[k]));
                }
            }
            word = std::move(merged);
        }

        std::size_t pos = span.begin;
        for (const auto& piece : word) {
            if (const auto it = vocab.token_to_id.find(piece.symbol); it != vocab.token_to_id.end()) {
                seq.ids.push_back(it->second);
                seq.offsets.push_back({pos, pos + piece.bytes});
            } else {
                // Byte fallback for merge products missing from the vocab.
                for (std::size_t b = pos; b < pos + piece.bytes; ++b) {
                    const auto bt = vocab.token_to_id.find(sym[static_cast<unsigned char>(text[b])]);
                    if (bt == vocab.token_to_id.end()) {
                        throw Error(ErrorKind::UnknownToken,
                                    "vocab has no symbol for byte " + std::to_string(static_cast<unsigned char>(text[b])));
                    }
                    seq.ids.push_back(bt->second);
                    seq.offsets.push_back({b, b + 1});
                }
            }
            pos += piece.bytes;
        }
    }
    return seq;
}

std::string decode(const Vocab& vocab, std::span<const TokenId> ids) {
    const auto& bytes = symbol_bytes();
    std::string out;
    for (const TokenId id : ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= vocab.size()) {
            throw Error(ErrorKind::UnknownToken, "token id " + std::to_string(id) + " not in vocab");
        }
        const std::string& token = vocab.id_to_token[static_cast<std::size_t>(id)];
        for (const auto& cp : decode_utf8(token)) {
            const std::string ch(token.substr(cp.begin, cp.len));
            if (const auto it = bytes.find(ch); it != bytes.end()) {
                out += static_cast<char>(it->second);
            } else {
                out += ch;
            }
        }
    }
    return out;
}

std::string token_text(const Vocab& vocab, TokenId id) {
    const TokenId one[] = {id};
    return decode(vocab, one);
}

TokenAlignment align(const TokenSeq& clean, const TokenSeq& corrupted) {
    std::size_t d = 0;
    while (d < clean.size() && d < corrupted.size() && clean.ids[d] == corrupted.ids[d]) ++d;
    if (d == 0) throw Error(ErrorKind::NoSharedPrefix, "clean and corrupted prompts share no leading token");
    return align(clean, corrupted, d - 1);
}

TokenAlignment align(const TokenSeq& clean, const TokenSeq& corrupted, std::size_t anchor) {
    if (clean.size() > corrupted.size()) {
        throw Error(ErrorKind::UnsupportedAsymmetry,
                    "clean prompt has " + std::to_string(clean.size()) + " tokens, corrupted only " +
                        std::to_string(corrupted.size()));
    }
    std::size_t d = 0;
    while (d < clean.size() && clean.ids[d] == corrupted.ids[d]) ++d;
    if (d == 0 || anchor >= d) {
        throw Error(ErrorKind::NoSharedPrefix, "anchor position " + std::to_string(anchor) +
                                                   " is not inside the shared prefix of length " + std::to_string(d));
    }

    TokenAlignment a;
    a.divergence_index = d;
    a.report_begin = anchor;
    a.clean_len = clean.size();
    a.corrupted_len = corrupted.size();
    for (std::size_t p = d; p < clean.size(); ++p) a.patchable_positions.push_back(p);
    return a;
}

} // namespace geopatch
