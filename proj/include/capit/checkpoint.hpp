#pragma once

#include <map>
#include <string>
#include <vector>

#include "capit/tensor.hpp"

namespace capit {

/// Self-describing parameter container:
///
///   capit-checkpoint v1
///   header: <n>
///   key = value            (n lines)
///   blobs: <m>
///   <name> <rows> <cols>   then rows*cols little-endian float32, column-major
///   ...
///   fnv1a <16 hex digits>  over every preceding byte
struct CheckpointData {
  std::map<std::string, std::string> header;
  std::vector<std::pair<std::string, Matrix<float>>> blobs;

  const Matrix<float>& blob(const std::string& name) const;  // IntegrityError when absent
};

void write_checkpoint(const std::string& path, const CheckpointData& data);
/// Throws IoError when unreadable, IntegrityError on a bad tag, truncation or
/// checksum mismatch.
CheckpointData read_checkpoint(const std::string& path);

}  // namespace capit
