#pragma once

#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace forkpath {

// Shortest decimal string that round-trips to the same double.
std::string format_double(double value);

// Fixed-width formatting for CSV/HTML output ("%.*g").
std::string format_g(double value, int significant = 6);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

// Runs fn(i) for i in [0, count) on up to `jobs` threads. Exceptions from
// workers are rethrown on the caller thread (first one wins).
void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn);

// Minimal CSV escaping: quotes fields containing separators or quotes.
std::string csv_escape(const std::string& field);

}  // namespace forkpath
