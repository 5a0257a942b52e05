#pragma once

#include <cdemr/data.hpp>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

namespace testing {

// Dataset with one x column and one z column.
inline cdemr::Dataset make_data(std::vector<double> x, std::vector<int> a, std::vector<double> z,
                                std::vector<int> m, std::vector<double> y) {
    cdemr::Dataset d;
    const auto n = static_cast<Eigen::Index>(y.size());
    d.x = Eigen::Map<Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
    d.z = Eigen::Map<Eigen::VectorXd>(z.data(), static_cast<Eigen::Index>(z.size()));
    d.y = Eigen::Map<Eigen::VectorXd>(y.data(), n);
    d.a = std::move(a);
    d.m = std::move(m);
    d.x_names = {"x"};
    d.z_names = {"z"};
    d.a_support = {0, 1};
    d.m_support = {0, 1};
    return d;
}

inline cdemr::Target target(int a, int m) {
    cdemr::Target t;
    t.a = a;
    t.m = m;
    return t;
}

// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("cdemr_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
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
    std::string str(const std::string& name = "") const { return (path_ / name).string(); }

private:
    std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

inline void spit(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

}  // namespace testing
