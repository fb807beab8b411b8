#pragma once

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "htce/matrix.hpp"
#include "htce/sim.hpp"

namespace htce::sim {

struct CsvError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CsvTable {
    std::vector<std::string> columns;
    Matrix values;
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

/// Numeric CSV with a header row of column names.
inline CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw CsvError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw CsvError(path + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    CsvTable t;
    t.columns = split_csv_line(line);
    if (t.columns.empty()) throw CsvError(path + ": no columns in header");

    std::vector<double> data;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != t.columns.size())
            throw CsvError(path + ": row " + std::to_string(rows + 2) + " has " +
                           std::to_string(cells.size()) + " cells, expected " +
                           std::to_string(t.columns.size()));
        for (std::size_t j = 0; j < cells.size(); ++j) {
            const std::string& c = cells[j];
            double v = 0.0;
            const auto* first = c.data();
            const auto* last = c.data() + c.size();
            while (first != last && (*first == ' ' || *first == '\t')) ++first;
            auto [ptr, ec] = std::from_chars(first, last, v);
            while (ptr != last && (*ptr == ' ' || *ptr == '\t')) ++ptr;
            if (ec != std::errc() || ptr != last)
                throw CsvError(path + ": non-numeric cell '" + c + "' at row " +
                               std::to_string(rows + 2) + ", column " + t.columns[j]);
            data.push_back(v);
        }
        ++rows;
    }
    if (rows == 0) throw CsvError(path + ": no data rows");
    t.values = Matrix(rows, t.columns.size());
    std::copy(data.begin(), data.end(), t.values.data());
    return t;
}

/// Companion schema: JSON object with "shared", "private_source" and
/// "private_target" arrays of column names. Returns the covariate matrix
/// (min-max scaled to [0,1] per column) and the matching partition.
inline std::pair<Matrix, FeaturePartition> load_covariates_csv(const std::string& csv_path,
                                                               const std::string& schema_path) {
    CsvTable t = read_csv(csv_path);

    std::ifstream sin(schema_path);
    if (!sin) throw CsvError("cannot open schema " + schema_path);
    nlohmann::json schema;
    try {
        sin >> schema;
    } catch (const nlohmann::json::exception& e) {
        throw CsvError(schema_path + ": " + e.what());
    }

    std::unordered_map<std::string, std::size_t> col_index;
    for (std::size_t j = 0; j < t.columns.size(); ++j) col_index[t.columns[j]] = j;

    auto resolve = [&](const char* key) {
        if (!schema.contains(key)) throw CsvError(schema_path + ": missing '" + key + "' array");
        std::vector<std::size_t> idx;
        for (const auto& name : schema.at(key)) {
            const auto it = col_index.find(name.get<std::string>());
            if (it == col_index.end())
                throw CsvError(schema_path + ": column '" + name.get<std::string>() +
                               "' not present in " + csv_path);
            idx.push_back(it->second);
        }
        return idx;
    };

    FeaturePartition p;
    p.shared_cols = resolve("shared");
    p.private_source_cols = resolve("private_source");
    p.private_target_cols = resolve("private_target");
    p.validate();
    minmax_scale_columns(t.values);
    return {std::move(t.values), std::move(p)};
}

}  // namespace htce::sim
