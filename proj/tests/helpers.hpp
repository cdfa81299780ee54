#pragma once

#include <filesystem>
#include <fstream>
#include <unistd.h>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include "varenn/climate.hpp"

namespace testing {

// Fresh directory under the system temp dir, removed on scope exit.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("varenn_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline std::vector<unsigned char> read_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Random cube with uniform values; `missing_rate` of entries set to NaN.
inline varenn::ClimateCube random_cube(std::vector<varenn::VariableId> vars, int years, std::size_t cells,
                                       std::uint32_t seed, double missing_rate = 0.0) {
    std::mt19937 gen(seed);
    std::uniform_real_distribution<float> u(-50.0f, 50.0f);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::vector<varenn::GridCell> grid;
    for (std::size_t c = 0; c < cells; ++c)
        grid.push_back({static_cast<std::int64_t>(1000 + 7 * c), -60.0 + 0.5 * static_cast<double>(c),
                        -170.0 + 1.5 * static_cast<double>(c)});
    std::vector<float> values(vars.size() * static_cast<std::size_t>(years) * 12 * cells);
    for (auto& v : values) v = coin(gen) < missing_rate ? varenn::kMissing : u(gen);
    return varenn::ClimateCube(std::move(vars), years * 12, 1901, std::move(grid), std::move(values));
}

}  // namespace testing
