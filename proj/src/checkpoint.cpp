#include "pimm/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "pimm/error.hpp"

namespace pimm {

namespace {

constexpr char kMagic[] = "pimm-checkpoint 1\n";

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

template <typename T>
void write_raw(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::ifstream& in, const std::string& path) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in.good()) {
    throw IoError("truncated checkpoint: " + path);
  }
  return v;
}

}  // namespace

void save_checkpoint(const ParameterStore& store, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out.is_open()) {
      throw IoError("cannot write checkpoint: " + tmp);
    }
    out.write(kMagic, sizeof(kMagic) - 1);
    write_raw<std::uint64_t>(out, store.count());
    for (ParamId i = 0; i < store.count(); ++i) {
      const std::string& name = store.name(i);
      const Array& value = store.value(i);
      write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
      out.write(name.data(), static_cast<std::streamsize>(name.size()));
      write_raw<std::uint32_t>(out, 2);
      write_raw<std::uint64_t>(out, value.rows());
      write_raw<std::uint64_t>(out, value.cols());
      out.write(reinterpret_cast<const char*>(value.data().data()),
                static_cast<std::streamsize>(value.size() * sizeof(double)));
    }
    if (!out.good()) {
      throw IoError("write failed for checkpoint: " + tmp);
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    throw IoError("rename " + tmp + " -> " + path + ": " + ec.message());
  }
}

std::vector<std::pair<std::string, Array>> load_checkpoint(
    const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in.is_open()) {
    throw IoError("cannot open checkpoint: " + path);
  }
  char magic[sizeof(kMagic) - 1];
  in.read(magic, sizeof(magic));
  if (!in.good() || std::memcmp(magic, kMagic, sizeof(magic)) != 0) {
    throw IoError("not a recognized checkpoint file: " + path);
  }
  const auto count = read_raw<std::uint64_t>(in, path);
  std::vector<std::pair<std::string, Array>> entries;
  entries.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name_len = read_raw<std::uint32_t>(in, path);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const auto ndim = read_raw<std::uint32_t>(in, path);
    if (ndim != 2) {
      throw IoError("unsupported array rank " + std::to_string(ndim) +
                    " in checkpoint: " + path);
    }
    const auto rows = read_raw<std::uint64_t>(in, path);
    const auto cols = read_raw<std::uint64_t>(in, path);
    std::vector<double> data(rows * cols);
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(double)));
    if (!in.good()) {
      throw IoError("truncated checkpoint: " + path);
    }
    entries.emplace_back(std::move(name), Array(rows, cols, std::move(data)));
  }
  return entries;
}

void restore_checkpoint(ParameterStore& store, const std::string& path) {
  const auto entries = load_checkpoint(path);
  if (entries.size() != store.count()) {
    throw IoError("checkpoint has " + std::to_string(entries.size()) +
                  " arrays, model expects " + std::to_string(store.count()));
  }
  for (const auto& [name, value] : entries) {
    Array& target = store.value(store.find(name));
    if (!target.same_shape(value)) {
      throw IoError("checkpoint shape mismatch for " + name + ": file has " +
                    shape_string(value) + ", model has " +
                    shape_string(target));
    }
    target = value;
  }
}

}  // namespace pimm
