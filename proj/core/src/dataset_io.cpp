#include <charconv>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "nclasso/design_lab.hpp"
#include "nclasso/errors.hpp"

namespace nclasso {

namespace {

constexpr std::string_view kMagic = "# nclasso-dataset v1;";

template <class T>
T parse_number(std::string_view token, const std::string& source, std::size_t line) {
    T value{};
    const auto* first = token.data();
    const auto* last = token.data() + token.size();
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last)
        throw IoError(fmt::format("malformed number '{}' on line {}", token, line), source);
    return value;
}

std::string_view header_field(std::string_view header, std::string_view key, const std::string& source) {
    const std::string needle = std::string(key) + "=";
    const auto pos = header.find(needle);
    if (pos == std::string_view::npos) throw IoError(fmt::format("header lacks '{}'", key), source);
    auto rest = header.substr(pos + needle.size());
    const auto end = rest.find_first_of(" ;\r");
    return rest.substr(0, end);
}

}  // namespace

void write_dataset(std::ostream& out, const Dataset& data) {
    fmt::print(out, "{} n={} d={} model={} seed={}\n", kMagic, data.n(), data.d(), data.model.tag(), data.seed);
    fmt::memory_buffer row;
    for (Eigen::Index i = 0; i < data.x.rows(); ++i) {
        row.clear();
        fmt::format_to(std::back_inserter(row), "{:.17g}", data.y[i]);
        for (Eigen::Index j = 0; j < data.x.cols(); ++j) fmt::format_to(std::back_inserter(row), ",{:.17g}", data.x(i, j));
        row.push_back('\n');
        out.write(row.data(), static_cast<std::streamsize>(row.size()));
    }
}

void write_dataset(const std::string& path, const Dataset& data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open dataset for writing", path);
    write_dataset(out, data);
    out.flush();
    if (!out) throw IoError("failed writing dataset", path);
}

DatasetFile read_dataset(std::istream& in, const std::string& source_name) {
    std::string header;
    if (!std::getline(in, header) || header.rfind(kMagic, 0) != 0)
        throw IoError("missing '# nclasso-dataset v1;' header", source_name);
    DatasetFile file;
    const auto n = parse_number<std::size_t>(header_field(header, "n", source_name), source_name, 1);
    const auto d = parse_number<std::size_t>(header_field(header, "d", source_name), source_name, 1);
    file.model_tag = std::string(header_field(header, "model", source_name));
    file.seed = parse_number<std::uint64_t>(header_field(header, "seed", source_name), source_name, 1);
    if (n == 0 || d == 0) throw IoError("dataset header declares an empty sample", source_name);

    file.x.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    file.y.resize(static_cast<Eigen::Index>(n));
    std::string line;
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::getline(in, line))
            throw IoError(fmt::format("expected {} data rows, found {}", n, i), source_name);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::string_view rest(line);
        for (std::size_t col = 0; col <= d; ++col) {
            const auto comma = rest.find(',');
            const bool last = col == d;
            if (last != (comma == std::string_view::npos))
                throw IoError(fmt::format("row {} does not have {} columns", i + 2, d + 1), source_name);
            const double v = parse_number<double>(rest.substr(0, comma), source_name, i + 2);
            if (col == 0)
                file.y[static_cast<Eigen::Index>(i)] = v;
            else
                file.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(col - 1)) = v;
            if (!last) rest.remove_prefix(comma + 1);
        }
    }
    while (std::getline(in, line)) {
        if (!line.empty() && line != "\r") throw IoError("trailing data after the declared rows", source_name);
    }
    return file;
}

DatasetFile read_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open dataset", path);
    return read_dataset(in, path);
}

}  // namespace nclasso
