#pragma once

#include "geopatch/corpus.hpp"
#include "geopatch/error.hpp"
#include "geopatch/model.hpp"
#include "geopatch/toy.hpp"

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace fixtures {

// Placenames that survive the shipped GeoNames fixture's filter.
inline constexpr std::size_t kFixturePlacenames = 30;

std::filesystem::path geonames_fixture(); // data/geonames_fixture.tsv in the source tree
std::vector<std::string> fixture_placenames();

// Toy model and vocab trained on the first three fixture placenames.
struct Toy {
    geopatch::toy::Assets assets;
    std::unique_ptr<geopatch::Model> model;
    std::vector<std::string> placenames;
};
const Toy& toy();

std::vector<geopatch::DistancePhrase> first_phrases(std::size_t n);

// A fresh empty directory under the system temp dir.
std::filesystem::path scratch_dir(const std::string& name);

template <typename Fn>
geopatch::ErrorKind kind_of(Fn&& fn) {
    try {
        fn();
    } catch (const geopatch::Error& e) {
        return e.kind();
    }
    throw std::runtime_error("expected a geopatch::Error");
}

} // namespace fixtures
