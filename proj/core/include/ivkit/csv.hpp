#pragma once

#include <string>
#include <vector>

#include "ivkit/dataset.hpp"
#include "ivkit/reduced_form.hpp"

namespace ivkit {

/// Deterministic round-trippable formatting shared by every text emitter
/// (byte-identical reruns depend on it).
std::string format_double(double value);

/// Individual-level CSV: header row with columns y, d, z1..zp (contiguous
/// numbering from 1) and optionally x1..xq; any column order; '.' decimal
/// separator. Throws ParseError with the offending line number.
IVDataset load_individual_csv(const std::string& path);

/// Summary CSV: columns gamma_hat, se_gamma, Gamma_hat, se_Gamma, one row
/// per instrument.
std::vector<SummaryRecord> load_summary_csv(const std::string& path);

void write_individual_csv(const std::string& path, const IVDataset& dataset);
void write_summary_csv(const std::string& path,
                       const std::vector<SummaryRecord>& records);

}  // namespace ivkit
