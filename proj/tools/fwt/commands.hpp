#pragma once

#include "config.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>

namespace fwt::cli {

struct Context {
    Json config;
    std::filesystem::path out;
};

/// A command fills `report` and writes any extra files under ctx.out.
using Command = std::function<void(const Context& ctx, Json& report)>;

const std::map<std::string, Command>& commands();

/// CSV writer with round-trip number formatting.
class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);
    CsvWriter& operator<<(const std::string& s);
    CsvWriter& operator<<(double v);
    CsvWriter& operator<<(long long v);
    CsvWriter& operator<<(int v) { return *this << static_cast<long long>(v); }
    CsvWriter& operator<<(std::size_t v) { return *this << static_cast<long long>(v); }
    CsvWriter& operator<<(long v) { return *this << static_cast<long long>(v); }
    void end_row();

private:
    void sep();
    std::ofstream out_;
    bool first_ = true;
};

std::string format_double(double v);
void write_json(const std::filesystem::path& path, const Json& j);

}  // namespace fwt::cli
