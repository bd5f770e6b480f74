#pragma once

// Dataset acquisition and parsing: MNIST / Fashion-MNIST (IDX) and the 8x8
// handwritten digits CSV. Downloads go through libcurl (http, https, file),
// gzip payloads are inflated with zlib and checksums use OpenSSL.

#include <curl/curl.h>
#include <fcntl.h>
#include <openssl/evp.h>
#include <sys/file.h>
#include <unistd.h>
#include <zlib.h>

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "spiketime/errors.hpp"
#include "spiketime/sample.hpp"

namespace spiketime::data {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Hashing and compression helpers

inline std::string hex_digest(const std::string& bytes, const EVP_MD* md) {
  unsigned char out[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), out, &len, md, nullptr) != 1) throw std::runtime_error("digest failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex.push_back(kHex[out[i] >> 4]);
    hex.push_back(kHex[out[i] & 0xF]);
  }
  return hex;
}

inline std::string sha256_hex(const std::string& bytes) { return hex_digest(bytes, EVP_sha256()); }
inline std::string md5_hex(const std::string& bytes) { return hex_digest(bytes, EVP_md5()); }

inline bool is_gzip(const std::string& bytes) {
  return bytes.size() >= 2 && static_cast<unsigned char>(bytes[0]) == 0x1f &&
         static_cast<unsigned char>(bytes[1]) == 0x8b;
}

inline std::string gunzip(const std::string& compressed) {
  z_stream zs{};
  if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK) throw FormatError("inflateInit2 failed");
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(compressed.data()));
  zs.avail_in = static_cast<uInt>(compressed.size());
  std::string out;
  char buf[1 << 16];
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    zs.next_out = reinterpret_cast<Bytef*>(buf);
    zs.avail_out = sizeof buf;
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      throw FormatError("corrupt gzip stream");
    }
    out.append(buf, sizeof buf - zs.avail_out);
    if (rc == Z_OK && zs.avail_in == 0 && zs.avail_out != 0) {
      inflateEnd(&zs);
      throw FormatError("truncated gzip stream");
    }
  }
  inflateEnd(&zs);
  return out;
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// ---------------------------------------------------------------------------
// Dataset descriptors

struct DatasetFile {
  std::string filename;           // name in the cache, always uncompressed
  std::vector<std::string> urls;  // tried in order
  std::string sha256;             // of the uncompressed content; may be empty
  std::string archive_md5;        // of the .gz payload, when known
};

struct DatasetSpec {
  std::string name;
  std::vector<DatasetFile> files;
  fs::path cache_dir;
  int i_max = 255;
  std::size_t train_count = 0;
  std::size_t test_count = 0;  // 0 when the set has no fixed test split
};

inline fs::path default_cache_root() {
  if (const char* env = std::getenv("SPIKETIME_CACHE_DIR"); env && *env) return env;
  if (const char* xdg = std::getenv("XDG_CACHE_HOME"); xdg && *xdg) return fs::path(xdg) / "spiketime";
  if (const char* home = std::getenv("HOME"); home && *home) return fs::path(home) / ".cache" / "spiketime";
  return fs::temp_directory_path() / "spiketime";
}

inline DatasetSpec mnist_spec(const fs::path& root = default_cache_root()) {
  const std::string base = "https://ossci-datasets.s3.amazonaws.com/mnist/";
  const std::string lecun = "http://yann.lecun.com/exdb/mnist/";
  auto file = [&](std::string name, std::string sha, std::string md5) {
    return DatasetFile{name, {base + name + ".gz", lecun + name + ".gz"}, std::move(sha), std::move(md5)};
  };
  return {"mnist",
          {file("train-images-idx3-ubyte", "ba891046e6505d7aadcbbe25680a0738ad16aec93bde7f9b65e87a2fc25776db",
                "f68b3c2dcbeaaa9fbdd348bbdeb94873"),
           file("train-labels-idx1-ubyte", "65a50cbbf4e906d70832878ad85ccda5333a97f0f4c3dd2ef09a8a9eef7101c5",
                "d53e105ee54ea40749a09fcbcd1e9432"),
           file("t10k-images-idx3-ubyte", "0fa7898d509279e482958e8ce81c8e77db3f2f8254e26661ceb7762c4d494ce7",
                "9fb629c4189551a2d022fa330f9573f3"),
           file("t10k-labels-idx1-ubyte", "ff7bcfd416de33731a308c3f266cc351222c34898ecbeaf847f06e48f7ec33f2",
                "ec29112dd5afa0611ce80d1b7f02629c")},
          root / "mnist",
          255,
          60000,
          10000};
}

// Only the archive digests are published for Fashion-MNIST; the content
// digest is recorded next to the file after the first verified download.
inline DatasetSpec fashion_mnist_spec(const fs::path& root = default_cache_root()) {
  const std::string base = "http://fashion-mnist.s3-website.eu-central-1.amazonaws.com/";
  auto file = [&](std::string name, std::string md5) {
    return DatasetFile{name, {base + name + ".gz"}, "", std::move(md5)};
  };
  return {"fashion-mnist",
          {file("train-images-idx3-ubyte", "8d4fb7e6c68d591d4c3dfef9ec88bf0d"),
           file("train-labels-idx1-ubyte", "25c81989df183df01b3e8a0aad5dffbe"),
           file("t10k-images-idx3-ubyte", "bef4ecab320f06d8554ea6380940ec79"),
           file("t10k-labels-idx1-ubyte", "bb300cfdad3c16e7a12a480ee83cd310")},
          root / "fashion-mnist",
          255,
          60000,
          10000};
}

// The 1797-sample 8x8 handwritten digits set (pixels 0..16, label last).
inline DatasetSpec digits_spec(const fs::path& root = default_cache_root()) {
  return {"digits",
          {{"digits.csv",
            {"https://raw.githubusercontent.com/scikit-learn/scikit-learn/main/sklearn/datasets/data/digits.csv.gz",
             "https://archive.ics.uci.edu/ml/machine-learning-databases/optdigits/optdigits.tes"},
            "6ebb3d2fee246a4e99363262ddf8a00a3c41bee6014c373ed9d9216ba7f651b8",
            ""}},
          root / "digits",
          15,
          1797,
          0};
}

inline DatasetSpec dataset_spec(const std::string& name, const fs::path& root = default_cache_root()) {
  if (name == "mnist") return mnist_spec(root);
  if (name == "fashion-mnist") return fashion_mnist_spec(root);
  if (name == "digits") return digits_spec(root);
  throw UsageError("unknown dataset '" + name + "' (expected mnist, fashion-mnist or digits)");
}

// ---------------------------------------------------------------------------
// Fetch

struct FetchOptions {
  // Base URLs tried before the dataset's own URLs, as <base>/<file>.gz and
  // then <base>/<file>. SPIKETIME_MIRROR (';'-separated) is appended.
  std::vector<std::string> mirrors;
  bool allow_network = true;
  bool force = false;
  std::ostream* log = nullptr;
};

struct FetchResult {
  std::vector<fs::path> files;
  std::size_t downloaded = 0;
};

namespace detail {

inline std::size_t curl_sink(char* ptr, std::size_t size, std::size_t nmemb, void* userdata) {
  static_cast<std::string*>(userdata)->append(ptr, size * nmemb);
  return size * nmemb;
}

inline std::string download(const std::string& url) {
  static const bool curl_ready = [] { return curl_global_init(CURL_GLOBAL_DEFAULT) == CURLE_OK; }();
  if (!curl_ready) throw DownloadError("libcurl initialisation failed");
  CURL* curl = curl_easy_init();
  if (curl == nullptr) throw DownloadError("curl_easy_init failed");
  std::string body;
  curl_easy_setopt(curl, CURLOPT_URL, url.c_str());
  curl_easy_setopt(curl, CURLOPT_FOLLOWLOCATION, 1L);
  curl_easy_setopt(curl, CURLOPT_FAILONERROR, 1L);
  curl_easy_setopt(curl, CURLOPT_CONNECTTIMEOUT, 20L);
  curl_easy_setopt(curl, CURLOPT_WRITEFUNCTION, &curl_sink);
  curl_easy_setopt(curl, CURLOPT_WRITEDATA, &body);
  const CURLcode rc = curl_easy_perform(curl);
  curl_easy_cleanup(curl);
  if (rc != CURLE_OK) throw DownloadError(url + ": " + curl_easy_strerror(rc));
  return body;
}

// Exclusive advisory lock on <file>.lock for the lifetime of the object.
class FileLock {
 public:
  explicit FileLock(const fs::path& path) : fd_(::open(path.c_str(), O_RDWR | O_CREAT, 0644)) {
    if (fd_ < 0) throw DownloadError("cannot create lock file " + path.string());
    ::flock(fd_, LOCK_EX);
  }
  ~FileLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  FileLock(const FileLock&) = delete;
  FileLock& operator=(const FileLock&) = delete;

 private:
  int fd_;
};

inline void write_atomically(const fs::path& target, const std::string& bytes) {
  const fs::path tmp = target.string() + ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DownloadError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DownloadError("short write to " + tmp.string());
  }
  fs::rename(tmp, target);
}

inline fs::path sidecar(const fs::path& file) { return file.string() + ".sha256"; }

inline std::string expected_digest(const DatasetFile& f, const fs::path& path) {
  if (!f.sha256.empty()) return f.sha256;
  if (fs::exists(sidecar(path))) {
    std::string s = read_file(sidecar(path));
    while (!s.empty() && (s.back() == '\n' || s.back() == ' ')) s.pop_back();
    return s;
  }
  return {};
}

inline std::vector<std::string> env_mirrors() {
  std::vector<std::string> out;
  const char* env = std::getenv("SPIKETIME_MIRROR");
  if (env == nullptr) return out;
  std::stringstream ss(env);
  std::string item;
  while (std::getline(ss, item, ';')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace detail

// Verifies a cached file against its expected content digest.
inline bool verify_cached(const DatasetFile& f, const fs::path& path) {
  const std::string want = detail::expected_digest(f, path);
  if (want.empty()) return false;
  return sha256_hex(read_file(path)) == want;
}

// Makes every file of the dataset present in the cache with a verified
// checksum. Cached files are checked without touching the network; a cached
// file that fails verification is an error unless opts.force is set.
inline FetchResult fetch(const DatasetSpec& spec, const FetchOptions& opts = {}) {
  std::error_code ec;
  fs::create_directories(spec.cache_dir, ec);
  if (ec) throw DownloadError("cannot create cache directory " + spec.cache_dir.string() + ": " + ec.message());

  std::vector<std::string> mirrors = opts.mirrors;
  for (auto& m : detail::env_mirrors()) mirrors.push_back(m);

  FetchResult result;
  for (const auto& f : spec.files) {
    const fs::path path = spec.cache_dir / f.filename;
    detail::FileLock lock(path.string() + ".lock");
    if (fs::exists(path) && !opts.force) {
      if (!verify_cached(f, path)) throw ChecksumError("checksum mismatch for cached file " + path.string());
      result.files.push_back(path);
      continue;
    }

    std::vector<std::string> candidates;
    for (const auto& m : mirrors) {
      std::string base = m;
      if (!base.empty() && base.back() != '/') base.push_back('/');
      candidates.push_back(base + f.filename + ".gz");
      candidates.push_back(base + f.filename);
    }
    if (opts.allow_network) candidates.insert(candidates.end(), f.urls.begin(), f.urls.end());

    std::vector<std::string> download_errors;
    std::vector<std::string> checksum_errors;
    bool done = false;
    for (const auto& url : candidates) {
      std::string payload;
      try {
        payload = detail::download(url);
      } catch (const DownloadError& e) {
        download_errors.push_back(e.what());
        continue;
      }
      if (is_gzip(payload)) {
        if (!f.archive_md5.empty() && md5_hex(payload) != f.archive_md5) {
          checksum_errors.push_back(url + ": archive md5 mismatch");
          continue;
        }
        try {
          payload = gunzip(payload);
        } catch (const FormatError& e) {
          checksum_errors.push_back(url + ": " + e.what());
          continue;
        }
      } else if (f.sha256.empty()) {
        // Without a content digest only a verified archive is acceptable.
        checksum_errors.push_back(url + ": no content checksum to verify an uncompressed payload");
        continue;
      }
      const std::string digest = sha256_hex(payload);
      if (!f.sha256.empty() && digest != f.sha256) {
        checksum_errors.push_back(url + ": sha256 " + digest + " != " + f.sha256);
        continue;
      }
      detail::write_atomically(path, payload);
      if (f.sha256.empty()) detail::write_atomically(detail::sidecar(path), digest + "\n");
      if (opts.log) *opts.log << "fetched " << f.filename << " from " << url << "\n";
      ++result.downloaded;
      result.files.push_back(path);
      done = true;
      break;
    }
    if (!done) {
      std::string msg = f.filename + ": ";
      for (const auto& e : checksum_errors) msg += "\n  " + e;
      for (const auto& e : download_errors) msg += "\n  " + e;
      if (candidates.empty()) msg += "no sources (network disabled and no mirror)";
      if (!checksum_errors.empty()) throw ChecksumError("checksum verification failed for " + msg);
      throw DownloadError("download failed for " + msg);
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Loaders

namespace detail {
inline std::uint32_t be32(const std::string& buf, std::size_t pos) {
  return (static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos])) << 24) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + 1])) << 16) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + 2])) << 8) |
         static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + 3]));
}
}  // namespace detail

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

// Parses an IDX image file and its label file (both uncompressed or gzip).
inline Dataset load_idx_bytes(std::string images, std::string labels) {
  if (is_gzip(images)) images = gunzip(images);
  if (is_gzip(labels)) labels = gunzip(labels);
  if (images.size() < 16) throw FormatError("IDX image file truncated (header)");
  if (labels.size() < 8) throw FormatError("IDX label file truncated (header)");
  if (detail::be32(images, 0) != kIdxImagesMagic) throw FormatError("bad IDX image magic");
  if (detail::be32(labels, 0) != kIdxLabelsMagic) throw FormatError("bad IDX label magic");
  const std::size_t n = detail::be32(images, 4);
  const std::size_t rows = detail::be32(images, 8);
  const std::size_t cols = detail::be32(images, 12);
  const std::size_t n_labels = detail::be32(labels, 4);
  if (n != n_labels) {
    throw FormatError("IDX count mismatch: " + std::to_string(n) + " images vs " + std::to_string(n_labels) +
                      " labels");
  }
  const std::size_t px = rows * cols;
  if (images.size() != 16 + n * px) throw FormatError("IDX image file truncated");
  if (labels.size() != 8 + n) throw FormatError("IDX label file truncated");

  Dataset d;
  d.i_max = 255;
  d.num_classes = 10;
  d.samples.resize(n);
  for (std::size_t s = 0; s < n; ++s) {
    auto& sample = d.samples[s];
    sample.pixels.resize(px);
    const auto* src = reinterpret_cast<const unsigned char*>(images.data()) + 16 + s * px;
    for (std::size_t p = 0; p < px; ++p) sample.pixels[p] = src[p];
    sample.label = static_cast<unsigned char>(labels[8 + s]);
    if (sample.label >= d.num_classes) throw FormatError("IDX label out of range at index " + std::to_string(s));
  }
  return d;
}

inline Dataset load_idx(const fs::path& images, const fs::path& labels) {
  return load_idx_bytes(read_file(images), read_file(labels));
}

// Rows of 64 integer pixels and a label. Pixels above 15 are clamped to 15
// (the set stores 0..16) and reported once on `warn`.
inline Dataset load_digits_csv_text(const std::string& text, std::ostream* warn = &std::clog) {
  Dataset d;
  d.i_max = 15;
  d.num_classes = 10;
  std::istringstream is(text);
  std::string line;
  std::size_t line_no = 0, clamped = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<int> fields;
    std::stringstream ls(line);
    std::string tok;
    while (std::getline(ls, tok, ',')) {
      std::size_t used = 0;
      int v = 0;
      try {
        v = std::stoi(tok, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      while (used < tok.size() && (tok[used] == ' ' || tok[used] == '\t')) ++used;
      if (tok.empty() || used != tok.size()) {
        throw FormatError("digits csv line " + std::to_string(line_no) + ": non-integer field '" + tok + "'");
      }
      fields.push_back(v);
    }
    if (fields.size() != 65) {
      throw FormatError("digits csv line " + std::to_string(line_no) + ": expected 65 fields, got " +
                        std::to_string(fields.size()));
    }
    Sample s;
    const int label = fields.back();
    if (label < 0 || label > 9) {
      throw FormatError("digits csv line " + std::to_string(line_no) + ": label " + std::to_string(label) +
                        " not in 0..9");
    }
    s.label = static_cast<std::size_t>(label);
    s.pixels.assign(fields.begin(), fields.end() - 1);
    for (auto& p : s.pixels) {
      if (p < 0) throw FormatError("digits csv line " + std::to_string(line_no) + ": negative pixel");
      if (p > 15) {
        p = 15;
        ++clamped;
      }
    }
    d.samples.push_back(std::move(s));
  }
  if (clamped > 0 && warn != nullptr) {
    *warn << "warning: " << clamped << " digits pixel values above 15 clamped to 15\n";
  }
  return d;
}

inline Dataset load_digits_csv(const fs::path& file, std::ostream* warn = &std::clog) {
  std::string text = read_file(file);
  if (is_gzip(text)) text = gunzip(text);
  return load_digits_csv_text(text, warn);
}

struct LoadedData {
  Dataset train;
  Dataset test;  // empty when the dataset has no predefined split
};

// Loads a fetched dataset from its cache directory.
inline LoadedData load_cached(const DatasetSpec& spec) {
  if (spec.name == "digits") {
    return {load_digits_csv(spec.cache_dir / "digits.csv"), {}};
  }
  LoadedData out;
  out.train = load_idx(spec.cache_dir / "train-images-idx3-ubyte", spec.cache_dir / "train-labels-idx1-ubyte");
  out.test = load_idx(spec.cache_dir / "t10k-images-idx3-ubyte", spec.cache_dir / "t10k-labels-idx1-ubyte");
  return out;
}

}  // namespace spiketime::data
