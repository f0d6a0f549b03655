#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "qtree/char_fn.hpp"
#include "qtree/eigen_search.hpp"

namespace qtree {

// 17 significant digits, enough to round-trip a double.
std::string format_double(double x);

// Header `problem,lambda,multiplicity`, one row per distinct eigenvalue.
void write_spectra_csv(std::ostream& out, const std::vector<SpectrumSet>& sets);
void write_spectra_csv(const std::string& path, const std::vector<SpectrumSet>& sets);

// Groups rows by problem, in order of first appearance. The file carries no window, so
// it is rebuilt around the data: from min(lambda_1 - 1, -1) up to half a gap past the
// last eigenvalue.
std::vector<SpectrumSet> read_spectra_csv(std::istream& in, const std::string& source = "spectra");
std::vector<SpectrumSet> read_spectra_csv(const std::string& path);

// Every *.csv file in `dir` with the spectrum header, in file name order.
std::vector<SpectrumSet> read_spectra_dir(const std::string& dir);

// Header `vertex,re_lambda,im_lambda,re_M,im_M`.
void write_weyl_csv(std::ostream& out, const std::vector<WeylSample>& samples);
void write_weyl_csv(const std::string& path, const std::vector<WeylSample>& samples);
std::vector<WeylSample> read_weyl_csv(std::istream& in, const std::string& source = "weyl");

}  // namespace qtree
