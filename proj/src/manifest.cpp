#include "streid/manifest.hpp"

#include "streid/error.hpp"

#include <openssl/evp.h>

#include <ctime>
#include <memory>

namespace streid {

RunManifest::RunManifest(std::string subcommand)
  : subcommand_(std::move(subcommand)), start_(std::chrono::steady_clock::now()) {
  const std::time_t now = std::time(nullptr);
  std::tm utc{};
  gmtime_r(&now, &utc);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &utc);
  started_at_ = buf;
}

void RunManifest::add_output(const fs::path& path) { checksums_[path.string()] = sha256_file(path); }

Json RunManifest::to_json() const {
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  return {{"subcommand", subcommand_},
          {"config", config_},
          {"seeds", seeds_},
          {"inputs", inputs_},
          {"outputs", checksums_},
          {"started_at", started_at_},
          {"wall_clock_seconds", elapsed}};
}

void RunManifest::write(const fs::path& path) const { write_json(path, to_json()); }

std::string sha256_file(const fs::path& path) {
  const std::string bytes = read_file(path);
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1)
    throw std::runtime_error("sha256 failed for " + path.string());
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xF];
  }
  return out;
}

} // namespace streid
