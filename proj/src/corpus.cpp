#include "geopatch/corpus.hpp"

#include "geopatch/error.hpp"

#include "json.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <set>

namespace geopatch {
namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto tab = line.find('\t', start);
        out.push_back(line.substr(start, tab == std::string_view::npos ? std::string_view::npos : tab - start));
        if (tab == std::string_view::npos) break;
        start = tab + 1;
    }
    return out;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
    if (s.empty()) return false;
    const auto* end = s.data() + s.size();
    const auto [ptr, ec] = std::from_chars(s.data(), end, out);
    return ec == std::errc{} && ptr == end;
}

} // namespace

GeonamesParse parse_geonames(std::istream& in) {
    GeonamesParse result;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto reject = [&](std::string reason) { result.rejects.push_back({number, std::move(reason)}); };

        const auto f = split_tabs(line);
        if (f.size() != 19) {
            reject("expected 19 tab-separated fields, found " + std::to_string(f.size()));
            continue;
        }
        PlaceRecord r;
        if (!parse_number(f[0], r.geoname_id)) {
            reject("geonameid is not an integer");
            continue;
        }
        r.name = std::string(f[1]);
        if (!parse_number(f[4], r.latitude) || !parse_number(f[5], r.longitude) || r.latitude < -90.0 ||
            r.latitude > 90.0 || r.longitude < -180.0 || r.longitude > 180.0) {
            reject("latitude/longitude missing or out of range");
            continue;
        }
        if (f[6].size() != 1) {
            reject("feature class is not a single character");
            continue;
        }
        r.feature_class = f[6][0];
        r.country_code = std::string(f[8]);
        if (!parse_number(f[14], r.population)) {
            reject("population '" + std::string(f[14]) + "' is not an integer");
            continue;
        }
        if (r.population < 0) {
            reject("population is negative");
            continue;
        }
        result.records.push_back(std::move(r));
    }
    return result;
}

std::vector<std::string> filter_places(std::span<const PlaceRecord> records, std::string_view country,
                                       std::int64_t min_pop_exclusive, char feature_class) {
    std::map<std::string, std::int64_t> best;
    for (const auto& r : records) {
        if (r.country_code != country || r.feature_class != feature_class || r.population <= min_pop_exclusive) continue;
        auto [it, inserted] = best.emplace(r.name, r.population);
        if (!inserted) it->second = std::max(it->second, r.population);
    }
    std::vector<std::string> names;
    names.reserve(best.size());
    for (const auto& [name, pop] : best) names.push_back(name);
    return names;
}

const std::vector<DistancePhrase>& distance_phrases() {
    static const std::vector<DistancePhrase> phrases = [] {
        std::vector<DistancePhrase> p;
        p.push_back({"five miles", 5});
        const char* tens[] = {"ten", "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety"};
        for (int i = 0; i < 9; ++i) p.push_back({std::string(tens[i]) + " miles", 10 * (i + 1)});
        p.push_back({"a hundred miles", 100});
        const char* units[] = {"two", "three", "four", "five", "six", "seven", "eight", "nine"};
        for (int i = 0; i < 8; ++i) p.push_back({std::string(units[i]) + " hundred miles", 100 * (i + 2)});
        p.push_back({"a thousand miles", 1000});
        return p;
    }();
    return phrases;
}

std::string prompt_prefix(std::string_view placename) {
    return "In the United Kingdom, " + std::string(placename) + " is a place located";
}

std::string clean_prompt(std::string_view placename) { return prompt_prefix(placename) + " near the city of"; }

std::string corrupted_prompt(std::string_view placename, const DistancePhrase& distance) {
    return prompt_prefix(placename) + " " + distance.text + " from the city of";
}

PromptPair make_prompt_pair(std::string placename, DistancePhrase distance, std::string clean_text,
                            std::string corrupted_text, const Vocab& vocab) {
    PromptPair pair;
    pair.clean_tokens = encode(vocab, clean_text);
    pair.corrupted_tokens = encode(vocab, corrupted_text);

    const std::string prefix = prompt_prefix(placename);
    auto fail = [&](const std::string& why) {
        throw Error(ErrorKind::CorpusBuildError, "placename '" + placename + "' (" + distance.text + "): " + why);
    };
    if (!clean_text.starts_with(prefix) || !corrupted_text.starts_with(prefix)) fail("prompt does not start with the template prefix");

    // Number of tokens covering the prefix; the last one is the anchor.
    std::size_t k = 0;
    while (k < pair.clean_tokens.size() && pair.clean_tokens.offsets[k].end <= prefix.size()) ++k;
    if (k == 0 || pair.clean_tokens.offsets[k - 1].end != prefix.size()) fail("prefix does not end on a token boundary");
    if (pair.corrupted_tokens.size() < k ||
        !std::equal(pair.clean_tokens.ids.begin(), pair.clean_tokens.ids.begin() + static_cast<std::ptrdiff_t>(k),
                    pair.corrupted_tokens.ids.begin())) {
        fail("clean and corrupted tokenizations diverge inside the shared prefix");
    }
    try {
        pair.alignment = align(pair.clean_tokens, pair.corrupted_tokens, k - 1);
    } catch (const Error& e) {
        fail(e.what());
    }

    pair.placename = std::move(placename);
    pair.distance = std::move(distance);
    pair.clean_text = std::move(clean_text);
    pair.corrupted_text = std::move(corrupted_text);
    return pair;
}

namespace {

void check_uniform_width(const std::vector<PromptPair>& pairs) {
    if (pairs.empty()) return;
    const std::size_t width = pairs.front().alignment.report_width();
    for (const auto& p : pairs) {
        if (p.alignment.report_width() != width) {
            throw Error(ErrorKind::CorpusBuildError,
                        "placename '" + p.placename + "' (" + p.distance.text + ") reports " +
                            std::to_string(p.alignment.report_width()) + " token offsets, expected " +
                            std::to_string(width));
        }
    }
}

void sort_pairs(std::vector<PromptPair>& pairs) {
    std::stable_sort(pairs.begin(), pairs.end(), [](const PromptPair& a, const PromptPair& b) {
        if (a.placename != b.placename) return a.placename < b.placename;
        return a.distance.miles < b.distance.miles;
    });
}

} // namespace

std::vector<PromptPair> build_pairs(std::span<const std::string> placenames, std::span<const DistancePhrase> phrases,
                                    const Vocab& vocab) {
    std::vector<PromptPair> pairs;
    pairs.reserve(placenames.size() * phrases.size());
    for (const auto& name : placenames) {
        for (const auto& phrase : phrases) {
            pairs.push_back(make_prompt_pair(name, phrase, clean_prompt(name), corrupted_prompt(name, phrase), vocab));
        }
    }
    sort_pairs(pairs);
    check_uniform_width(pairs);
    return pairs;
}

Corpus make_corpus(std::vector<std::string> placenames, std::vector<DistancePhrase> phrases, bool control) {
    Corpus c;
    c.placenames = std::move(placenames);
    std::sort(c.placenames.begin(), c.placenames.end());
    c.phrases = std::move(phrases);
    for (const auto& name : c.placenames) {
        for (const auto& phrase : c.phrases) {
            const std::string clean = clean_prompt(name);
            c.pairs.push_back({name, phrase.text, clean, control ? clean : corrupted_prompt(name, phrase)});
        }
    }
    return c;
}

std::string to_json(const Corpus& corpus) {
    nlohmann::ordered_json doc;
    doc["placenames"] = corpus.placenames;
    doc["phrases"] = nlohmann::ordered_json::array();
    for (const auto& p : corpus.phrases) doc["phrases"].push_back({{"text", p.text}, {"miles", p.miles}});
    doc["pairs"] = nlohmann::ordered_json::array();
    for (const auto& e : corpus.pairs) {
        doc["pairs"].push_back(
            {{"placename", e.placename}, {"distance_text", e.distance_text}, {"clean", e.clean}, {"corrupted", e.corrupted}});
    }
    return doc.dump(2) + "\n";
}

Corpus parse_corpus(std::istream& json) {
    Corpus c;
    try {
        const auto doc = nlohmann::json::parse(json);
        c.placenames = doc.at("placenames").get<std::vector<std::string>>();
        for (const auto& p : doc.at("phrases")) c.phrases.push_back({p.at("text").get<std::string>(), p.at("miles").get<int>()});
        for (const auto& e : doc.at("pairs")) {
            c.pairs.push_back({e.at("placename").get<std::string>(), e.at("distance_text").get<std::string>(),
                               e.at("clean").get<std::string>(), e.at("corrupted").get<std::string>()});
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::CorpusBuildError, std::string("corpus JSON: ") + e.what());
    }
    return c;
}

Corpus load_corpus(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
    return parse_corpus(in);
}

std::vector<PromptPair> tokenize_corpus(const Corpus& corpus, const Vocab& vocab, std::size_t limit_placenames) {
    std::set<std::string> keep(corpus.placenames.begin(), corpus.placenames.end());
    if (limit_placenames > 0 && keep.size() > limit_placenames) {
        keep.erase(std::next(keep.begin(), static_cast<std::ptrdiff_t>(limit_placenames)), keep.end());
    }
    std::vector<PromptPair> pairs;
    for (const auto& e : corpus.pairs) {
        if (!keep.contains(e.placename)) continue;
        const auto phrase = std::find_if(corpus.phrases.begin(), corpus.phrases.end(),
                                         [&](const DistancePhrase& p) { return p.text == e.distance_text; });
        if (phrase == corpus.phrases.end()) {
            throw Error(ErrorKind::CorpusBuildError, "pair for '" + e.placename + "' uses unlisted distance '" +
                                                         e.distance_text + "'");
        }
        pairs.push_back(make_prompt_pair(e.placename, *phrase, e.clean, e.corrupted, vocab));
    }
    sort_pairs(pairs);
    check_uniform_width(pairs);
    return pairs;
}

} // namespace geopatch
