#include "fixtures.hpp"

#include <fstream>
#include <unistd.h>

namespace fixtures {

std::filesystem::path geonames_fixture() { return std::filesystem::path(GEOPATCH_SOURCE_DIR) / "data" / "geonames_fixture.tsv"; }

std::vector<std::string> fixture_placenames() {
    std::ifstream in(geonames_fixture());
    const auto parsed = geopatch::parse_geonames(in);
    return geopatch::filter_places(parsed.records, "GB", 50000, 'P');
}

const Toy& toy() {
    static const Toy instance = [] {
        Toy t;
        auto names = fixture_placenames();
        names.resize(3);
        t.placenames = names;
        t.assets = geopatch::toy::make_assets(names);
        t.model = std::make_unique<geopatch::Model>(t.assets.config, t.assets.params);
        return t;
    }();
    return instance;
}

std::vector<geopatch::DistancePhrase> first_phrases(std::size_t n) {
    const auto& all = geopatch::distance_phrases();
    return {all.begin(), all.begin() + static_cast<std::ptrdiff_t>(std::min(n, all.size()))};
}

std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("geopatch_" + name + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

} // namespace fixtures
