#pragma once

// Raw matrix files: comma-separated, row-major, no header. Dimensions are
// inferred from the number of rows and fields. Values are written in the
// shortest decimal form that reads back to the same double.

#include "divsbl/model.hpp"

#include <filesystem>
#include <string>

namespace divsbl {

/// Shortest round-trip decimal representation of x.
std::string format_double(double x);

Matrix read_matrix_csv(const std::filesystem::path& path);
void write_matrix_csv(const std::filesystem::path& path, const Matrix& m);

/// Accepts a single column or a single row.
Vector read_vector_csv(const std::filesystem::path& path);
/// Written as a single column.
void write_vector_csv(const std::filesystem::path& path, const Vector& v);

}  // namespace divsbl
