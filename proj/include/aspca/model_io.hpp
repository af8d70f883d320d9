#pragma once

#include "aspca/detector.hpp"

#include <iosfwd>
#include <string>

namespace aspca {

// Versioned JSON serialization of a detection model. Doubles round-trip via
// shortest-representation encoding, so load(save(m)) reproduces every score
// bit-for-bit. Loading validates the format tag and orthonormality of the
// abnormal basis (rejected beyond 1e-4).
void save_model(const DetectionModel& model, std::ostream& out);
void save_model_file(const DetectionModel& model, const std::string& path);

DetectionModel load_model(std::istream& in);
DetectionModel load_model_file(const std::string& path);

} // namespace aspca
