#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "esnp/error.hpp"

namespace esnp::harness {

namespace detail {

inline std::vector<std::string> csv_columns(const std::filesystem::path& csv) {
  std::ifstream in(csv);
  std::string line;
  while (std::getline(in, line))
    if (!line.empty() && line[0] != '#') break;
  std::vector<std::string> cols;
  std::size_t start = 0;
  while (start <= line.size()) {
    auto comma = line.find(',', start);
    if (comma == std::string::npos) comma = line.size();
    cols.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return cols;
}

}  // namespace detail

/// Writes one gnuplot script next to every CSV series in `dir`. Nothing
/// is rendered; each script sets a png terminal and names the output.
inline std::vector<std::filesystem::path> plot_emit(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw ArgumentError("plot_emit: not a directory: " + dir.string());
  std::vector<fs::path> csvs;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".csv") csvs.push_back(e.path());
  if (csvs.empty()) throw ArgumentError("plot_emit: no CSV series in " + dir.string());
  std::sort(csvs.begin(), csvs.end());

  std::vector<fs::path> scripts;
  for (const auto& csv : csvs) {
    auto cols = detail::csv_columns(csv);
    if (cols.size() < 2) throw ArgumentError("plot_emit: " + csv.filename().string() + " has fewer than two columns");
    fs::path script = csv;
    script.replace_extension(".gp");
    std::ofstream out(script);
    if (!out) throw Error("cannot write " + script.string());
    const std::string stem = csv.stem().string();
    out << "set datafile separator ','\n"
        << "set datafile commentschars '#'\n"
        << "set key autotitle columnhead\n"
        << "set terminal pngcairo size 900,600\n"
        << "set output '" << stem << ".png'\n"
        << "set title '" << stem << "' noenhanced\n"
        << "set xlabel '" << cols[0] << "' noenhanced\n"
        << "plot ";
    for (std::size_t k = 1; k < cols.size(); ++k)
      out << (k > 1 ? ", \\\n     " : "") << "'" << csv.filename().string() << "' using 1:" << k + 1
          << " with lines";
    out << "\n";
    scripts.push_back(script);
  }
  return scripts;
}

}  // namespace esnp::harness
