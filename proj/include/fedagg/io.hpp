#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedagg/core.hpp"
#include "fedagg/krum.hpp"

namespace fedagg {

// Atomic file write: the content lands under a temporary name and is renamed
// into place, so readers see either the whole file or none of it.
inline void atomic_write_file(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + tmp + "' for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("write to '" + tmp + "' failed");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw std::runtime_error("cannot rename '" + tmp + "' to '" + path + "'");
}

namespace detail {

inline void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f64(std::string& out, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

inline uint32_t get_u32(const std::string& s, size_t& pos) {
  if (pos + 4 > s.size()) throw std::runtime_error("truncated FLUPD1 data");
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<uint32_t>(static_cast<unsigned char>(s[pos + i])) << (8 * i);
  pos += 4;
  return v;
}

inline double get_f64(const std::string& s, size_t& pos) {
  if (pos + 8 > s.size()) throw std::runtime_error("truncated FLUPD1 data");
  uint64_t bits = 0;
  for (int i = 0; i < 8; ++i)
    bits |= static_cast<uint64_t>(static_cast<unsigned char>(s[pos + i])) << (8 * i);
  pos += 8;
  double v;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

}  // namespace detail

// Binary round dump, format FLUPD1: 6-byte magic, little-endian u32 client
// count, u32 dimension, u32 round, then n*d little-endian f64 values in
// client-major order.
inline std::string encode_flupd1(const ClientRoundSet& set) {
  set.validate();
  std::string out = "FLUPD1";
  detail::put_u32(out, static_cast<uint32_t>(set.n()));
  detail::put_u32(out, static_cast<uint32_t>(set.dim()));
  detail::put_u32(out, static_cast<uint32_t>(set.round));
  for (const auto& u : set.updates)
    for (double v : u) detail::put_f64(out, v);
  return out;
}

inline ClientRoundSet decode_flupd1(const std::string& data) {
  if (data.size() < 6 || data.compare(0, 6, "FLUPD1") != 0)
    throw std::runtime_error("not an FLUPD1 dump: bad magic");
  size_t pos = 6;
  uint32_t n = detail::get_u32(data, pos);
  uint32_t d = detail::get_u32(data, pos);
  uint32_t round = detail::get_u32(data, pos);
  ClientRoundSet set;
  set.round = static_cast<int>(round);
  set.updates.resize(n);
  set.client_ids.resize(n);
  for (uint32_t i = 0; i < n; ++i) {
    set.client_ids[i] = static_cast<int>(i);
    set.updates[i].resize(d);
    for (uint32_t j = 0; j < d; ++j) set.updates[i][j] = detail::get_f64(data, pos);
  }
  if (pos != data.size()) throw std::runtime_error("trailing bytes in FLUPD1 dump");
  set.validate();
  return set;
}

inline void write_flupd1(const std::string& path, const ClientRoundSet& set) {
  atomic_write_file(path, encode_flupd1(set));
}

inline ClientRoundSet read_flupd1(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_flupd1(data);
}

// Per-round selection report; the distance matrix is omitted above 20 clients.
inline nlohmann::json selection_report_json(const SelectionReport& rep) {
  nlohmann::json j;
  j["dis_sums"] = rep.dis_sums;
  j["i_star"] = rep.i_star;
  j["selected"] = rep.selected;
  j["weights_p"] = rep.weights_p;
  if (rep.distances.n <= 20) {
    nlohmann::json rows = nlohmann::json::array();
    for (size_t i = 0; i < rep.distances.n; ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (size_t k = 0; k < rep.distances.n; ++k) row.push_back(rep.distances.at(i, k));
      rows.push_back(row);
    }
    j["distances"] = rows;
  }
  return j;
}

}  // namespace fedagg
