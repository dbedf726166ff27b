#include "bq/checkpoint.hpp"

#include "bq/errors.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace bq {

namespace {

constexpr char kMagic[5] = {'B', 'Q', 'C', 'K', '1'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  void u32(std::uint32_t v) { raw(&v, 4); }
  void u64(std::uint64_t v) { raw(&v, 8); }
  void f64(double v) {
    std::uint64_t b;
    std::memcpy(&b, &v, 8);
    u64(b);
  }
  void bytes(const std::string& s) { buf_ += s; }
  const std::string& str() const { return buf_; }

 private:
  void raw(const void* p, int len) {
    unsigned char b[8];
    std::memcpy(b, p, len);
    if constexpr (std::endian::native == std::endian::big)
      for (int i = 0; i < len / 2; ++i) std::swap(b[i], b[len - 1 - i]);
    buf_.append(reinterpret_cast<const char*>(b), len);
  }
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(const std::string& s) : s_(s) {}
  std::uint32_t u32() { return static_cast<std::uint32_t>(raw(4)); }
  std::uint64_t u64() { return raw(8); }
  double f64() {
    const std::uint64_t b = u64();
    double v;
    std::memcpy(&v, &b, 8);
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string out = s_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  bool done() const { return pos_ == s_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > s_.size()) throw CheckpointError("checkpoint truncated");
  }
  std::uint64_t raw(int len) {
    need(len);
    std::uint64_t v = 0;
    for (int i = len - 1; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(s_[pos_ + i]);
    pos_ += len;
    return v;
  }
  const std::string& s_;
  std::size_t pos_ = 0;
};

std::uint32_t crc(const std::string& s) {
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(s.data()), static_cast<uInt>(s.size())));
}

void section(Writer& w, const char tag[4], const std::string& payload) {
  w.bytes(std::string(tag, 4));
  w.u64(payload.size());
  w.bytes(payload);
  w.u32(crc(payload));
}

std::string field_payload(const ScalarField& f) {
  Writer w;
  w.u32(static_cast<std::uint32_t>(f.n()));
  for (std::size_t i = 0; i < f.size(); ++i) {
    w.f64(f.data()[i].real());
    w.f64(f.data()[i].imag());
  }
  return w.str();
}

ScalarField read_field(const std::string& payload, int expected_n) {
  Reader r(payload);
  const int n = static_cast<int>(r.u32());
  if (expected_n > 0 && n != expected_n)
    throw CheckpointError("checkpoint resolution " + std::to_string(n) + " does not match " +
                          std::to_string(expected_n));
  if (n < 4 || n % 2) throw CheckpointError("checkpoint field has invalid resolution");
  ScalarField f(n);
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double re = r.f64(), im = r.f64();
    f.data()[i] = cplx(re, im);
  }
  if (!r.done()) throw CheckpointError("checkpoint field section has trailing bytes");
  return f;
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& c) {
  Writer w;
  w.bytes(std::string(kMagic, 5));
  w.u32(kVersion);
  Writer meta;
  meta.u64(c.master_seed);
  meta.u64(c.stream);
  meta.u64(c.step);
  meta.f64(c.dt);
  meta.f64(c.params.nu1);
  meta.f64(c.params.nu2);
  meta.f64(c.params.g);
  for (double a : c.params.alpha) meta.f64(a);
  section(w, "META", meta.str());
  section(w, "OMEG", field_payload(c.U.omega));
  section(w, "THET", field_payload(c.U.theta));
  Writer part;
  for (double v : {c.e.x(0), c.e.x(1), c.e.tau(0), c.e.tau(1), c.e.v(0), c.e.v(1), c.e.A(0, 0), c.e.A(0, 1),
                   c.e.A(1, 0), c.e.A(1, 1)})
    part.f64(v);
  section(w, "PART", part.str());
  return w.str();
}

Checkpoint decode_checkpoint(const std::string& bytes, int expected_n) {
  Reader r(bytes);
  if (r.bytes(5) != std::string(kMagic, 5)) throw CheckpointError("not a checkpoint file");
  const std::uint32_t version = r.u32();
  if (version != kVersion) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  auto next = [&](const char* tag) {
    if (r.bytes(4) != std::string(tag, 4)) throw CheckpointError(std::string("expected section ") + tag);
    const std::uint64_t len = r.u64();
    if (len > bytes.size()) throw CheckpointError("checkpoint truncated");
    std::string payload = r.bytes(len);
    if (r.u32() != crc(payload)) throw CheckpointError(std::string("checksum mismatch in section ") + tag);
    return payload;
  };
  Checkpoint c;
  {
    const std::string m = next("META");
    Reader mr(m);
    c.master_seed = mr.u64();
    c.stream = mr.u64();
    c.step = mr.u64();
    c.dt = mr.f64();
    c.params.nu1 = mr.f64();
    c.params.nu2 = mr.f64();
    c.params.g = mr.f64();
    for (double& a : c.params.alpha) a = mr.f64();
  }
  c.U.omega = read_field(next("OMEG"), expected_n);
  c.U.theta = read_field(next("THET"), c.U.omega.n());
  {
    const std::string p = next("PART");
    Reader pr(p);
    double v[10];
    for (double& x : v) x = pr.f64();
    c.e.x = Vec2(v[0], v[1]);
    c.e.tau = Vec2(v[2], v[3]);
    c.e.v = Vec2(v[4], v[5]);
    c.e.A << v[6], v[7], v[8], v[9];
  }
  if (!r.done()) throw CheckpointError("checkpoint has trailing bytes");
  return c;
}

void save_checkpoint(const Checkpoint& c, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot write checkpoint '" + path + "'");
  const std::string bytes = encode_checkpoint(c);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw CheckpointError("failed writing checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path, int expected_n) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open checkpoint '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return decode_checkpoint(ss.str(), expected_n);
}

}  // namespace bq
