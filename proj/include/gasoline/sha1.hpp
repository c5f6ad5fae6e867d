#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

namespace gasoline {

// Minimal SHA-1 for content hashing of graph directories. Not used for
// anything security sensitive; we just need a stable, well-known digest.
class Sha1 {
 public:
  Sha1();
  void update(const void* data, std::size_t len);
  void update(const std::string& s) { update(s.data(), s.size()); }
  // Finalizes and returns the 40-char lowercase hex digest. The object is
  // spent afterwards.
  std::string hex_digest();

 private:
  void process_block(const std::uint8_t* block);

  std::uint32_t h_[5];
  std::uint64_t total_len_ = 0;
  std::uint8_t buffer_[64];
  std::size_t buffered_ = 0;
};

inline std::string sha1_hex(const std::string& s) {
  Sha1 h;
  h.update(s);
  return h.hex_digest();
}

}  // namespace gasoline
