#pragma once

#include "fwt/types.hpp"

#include <doctest.h>

#include <filesystem>
#include <string>

namespace fwt::test {

/// Runs `fn` and checks that it throws fwt::Error with `code`.
template <typename Fn>
void check_error(Fn&& fn, ErrorCode code) {
    bool threw = false;
    try {
        fn();
    } catch (const Error& e) {
        threw = true;
        CHECK_MESSAGE(e.code() == code, "got " << to_string(e.code()) << ": " << e.what());
    }
    CHECK_MESSAGE(threw, "expected " << to_string(code));
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& name);
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& leaf) const { return path_ / leaf; }

private:
    std::filesystem::path path_;
};

void write_text(const std::filesystem::path& p, const std::string& text);
std::string read_bytes(const std::filesystem::path& p);

}  // namespace fwt::test
