#include "capit/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "capit/error.hpp"
#include "capit/text.hpp"

namespace capit {

static_assert(std::endian::native == std::endian::little, "checkpoint blobs are stored little-endian");

namespace {
constexpr const char* kTag = "capit-checkpoint v1";
constexpr const char* kSum = "fnv1a ";
}  // namespace

const Matrix<float>& CheckpointData::blob(const std::string& name) const {
  for (const auto& [n, m] : blobs)
    if (n == name) return m;
  throw IntegrityError("checkpoint has no blob '" + name + "'");
}

void write_checkpoint(const std::string& path, const CheckpointData& data) {
  std::ostringstream body;
  body << kTag << '\n' << "header: " << data.header.size() << '\n';
  for (const auto& [k, v] : data.header) {
    if (k.find('\n') != std::string::npos || v.find('\n') != std::string::npos) {
      throw InvalidInput("checkpoint header entries must be single-line");
    }
    body << k << " = " << v << '\n';
  }
  body << "blobs: " << data.blobs.size() << '\n';
  for (const auto& [name, m] : data.blobs) {
    body << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    body.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(float)));
    body << '\n';
  }
  const std::string payload = body.str();
  Fnv1a h;
  h.update(payload);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path);
  out << payload << kSum << h.hex() << '\n';
  if (!out) throw IoError("write failed for checkpoint " + path);
}

CheckpointData read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  const std::string file((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  const std::size_t sum_len = std::strlen(kSum) + 16 + 1;
  if (file.size() < sum_len || file.compare(file.size() - sum_len, std::strlen(kSum), kSum) != 0) {
    throw IntegrityError("checkpoint " + path + " is truncated or has no checksum");
  }
  const std::string payload = file.substr(0, file.size() - sum_len);
  Fnv1a h;
  h.update(payload);
  if (file.substr(file.size() - 17, 16) != h.hex()) throw IntegrityError("checkpoint " + path + " checksum mismatch");

  std::size_t pos = 0;
  auto next_line = [&]() {
    const auto nl = payload.find('\n', pos);
    if (nl == std::string::npos) throw IntegrityError("checkpoint " + path + " is malformed");
    std::string line = payload.substr(pos, nl - pos);
    pos = nl + 1;
    return line;
  };
  auto counted = [&](const std::string& label) {
    const std::string line = next_line();
    if (line.rfind(label, 0) != 0) throw IntegrityError("checkpoint " + path + ": expected '" + label + "'");
    return parse_int(trim(line.substr(label.size())));
  };

  if (next_line() != kTag) throw IntegrityError("checkpoint " + path + ": unknown format tag");
  CheckpointData data;
  try {
    const long long nh = counted("header:");
    for (long long k = 0; k < nh; ++k) {
      const std::string line = next_line();
      const auto eq = line.find(" = ");
      if (eq == std::string::npos) throw IntegrityError("checkpoint " + path + ": bad header line");
      data.header[line.substr(0, eq)] = line.substr(eq + 3);
    }
    const long long nb = counted("blobs:");
    for (long long k = 0; k < nb; ++k) {
      const auto f = split(next_line(), ' ');
      if (f.size() != 3) throw IntegrityError("checkpoint " + path + ": bad blob header");
      const long long rows = parse_int(f[1]), cols = parse_int(f[2]);
      const std::size_t bytes = static_cast<std::size_t>(rows * cols) * sizeof(float);
      if (rows < 0 || cols < 0 || pos + bytes + 1 > payload.size()) {
        throw IntegrityError("checkpoint " + path + ": blob overruns file");
      }
      Matrix<float> m(rows, cols);
      std::memcpy(m.data(), payload.data() + pos, bytes);
      pos += bytes + 1;
      data.blobs.emplace_back(f[0], std::move(m));
    }
  } catch (const InvalidInput& e) {
    throw IntegrityError("checkpoint " + path + ": " + e.what());
  }
  if (pos != payload.size()) throw IntegrityError("checkpoint " + path + ": trailing bytes");
  return data;
}

}  // namespace capit
