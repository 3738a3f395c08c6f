#pragma once

#include "geopatch/tokenizer.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace geopatch {

// One row of a GeoNames dump (only the fields this project reads).
struct PlaceRecord {
    std::int64_t geoname_id = 0;
    std::string name;
    double latitude = 0.0;
    double longitude = 0.0;
    char feature_class = '\0';
    std::string country_code;
    std::int64_t population = 0;
};

struct RejectedLine {
    std::size_t line_number = 0; // 1-based
    std::string reason;
};

struct GeonamesParse {
    std::vector<PlaceRecord> records;
    std::vector<RejectedLine> rejects;
};

// Tab-separated, 19 fields, no header. Malformed lines are reported, not fatal.
GeonamesParse parse_geonames(std::istream& in);

// Names with matching country and feature class and population strictly above
// min_pop_exclusive. Same-named places collapse to one entry; result is
// sorted bytewise.
std::vector<std::string> filter_places(std::span<const PlaceRecord> records, std::string_view country,
                                       std::int64_t min_pop_exclusive, char feature_class);

struct DistancePhrase {
    std::string text;
    int miles = 0;

    friend bool operator==(const DistancePhrase&, const DistancePhrase&) = default;
};

// The 20 corrupted-prompt distance expressions, ascending by miles.
const std::vector<DistancePhrase>& distance_phrases();

// "In the United Kingdom, <placename> is a place located"
std::string prompt_prefix(std::string_view placename);
std::string clean_prompt(std::string_view placename);
std::string corrupted_prompt(std::string_view placename, const DistancePhrase& distance);

struct PromptPair {
    std::string placename;
    DistancePhrase distance;
    std::string clean_text;
    std::string corrupted_text;
    TokenSeq clean_tokens;
    TokenSeq corrupted_tokens;
    TokenAlignment alignment; // reporting anchored at the "located" token
};

// Tokenizes and aligns one pair. Throws CorpusBuildError if the template
// prefix does not end on a token boundary shared by both prompts.
PromptPair make_prompt_pair(std::string placename, DistancePhrase distance, std::string clean_text,
                            std::string corrupted_text, const Vocab& vocab);

// Every placename x phrase, sorted by (placename, miles). All pairs must share
// one reporting width, or the build fails naming the odd placename.
std::vector<PromptPair> build_pairs(std::span<const std::string> placenames, std::span<const DistancePhrase> phrases,
                                    const Vocab& vocab);

// Tokenizer-independent corpus file.
struct Corpus {
    struct Entry {
        std::string placename;
        std::string distance_text;
        std::string clean;
        std::string corrupted;
    };

    std::vector<std::string> placenames;
    std::vector<DistancePhrase> phrases;
    std::vector<Entry> pairs;
};

// control = true writes the clean prompt into the corrupted slot as well.
Corpus make_corpus(std::vector<std::string> placenames, std::vector<DistancePhrase> phrases, bool control = false);

std::string to_json(const Corpus& corpus);
Corpus parse_corpus(std::istream& json);
Corpus load_corpus(const std::filesystem::path& path);

// Tokenizes every entry (optionally only the first limit placenames).
std::vector<PromptPair> tokenize_corpus(const Corpus& corpus, const Vocab& vocab, std::size_t limit_placenames = 0);

} // namespace geopatch
