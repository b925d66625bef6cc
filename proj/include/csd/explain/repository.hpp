#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "csd/explain/shap.hpp"
#include "csd/numerics/tensor.hpp"

namespace csd::xai {

inline constexpr int kRepositorySchemaVersion = 1;
inline const std::string kTrainSplit = "train";
inline const std::string kTestSplit = "test";

// Labeled signature matrix extracted from a repository.
struct SignatureMatrix {
    num::Tensor x;  // [n, d]; [0, 0] when empty
    std::vector<int> y;
    std::vector<std::string> ids;
    std::string model_fingerprint;

    std::size_t size() const { return y.size(); }
};

// Append-only store of labeled signatures keyed by (window id, model fingerprint).
// Single writer; const member functions may be called concurrently.
class SignatureRepository {
public:
    // All-or-nothing: validates every record first. Duplicate keys (against the
    // store or within the batch) throw DuplicateKeyError naming the offenders;
    // bad labels, split tags or empty fields throw ContractViolation.
    void append(const std::vector<XaiSignature>& signatures);

    // Records of one split in insertion order. Self-labeled records are left out
    // unless asked for. Throws ContractViolation if the selection mixes model
    // fingerprints or signature lengths.
    SignatureMatrix dataset(const std::string& split, bool include_self_labeled = false) const;

    const std::vector<XaiSignature>& records() const { return records_; }
    std::size_t size() const { return records_.size(); }
    bool contains(const std::string& window_id, const std::string& model_fingerprint) const;

    // JSON lines: a header object carrying "schema_version" (plus `header`
    // fields), then one record per line.
    void save(const std::filesystem::path& path, const nlohmann::json& header = nlohmann::json::object()) const;
    static SignatureRepository load(const std::filesystem::path& path, nlohmann::json* header = nullptr);

    // Appends records to a repository file without rewriting it, creating the
    // file when missing. Existing records are read first to reject duplicates.
    static void append_to_file(const std::filesystem::path& path, const std::vector<XaiSignature>& signatures,
                               const nlohmann::json& header = nlohmann::json::object());

    // Reads a repository file, re-verifies every invariant and rewrites it
    // compactly. Returns the number of records kept.
    static std::size_t rebuild(const std::filesystem::path& path);

private:
    std::vector<XaiSignature> records_;
    std::set<std::pair<std::string, std::string>> keys_;
};

nlohmann::json to_json(const XaiSignature& s);
XaiSignature signature_from_json(const nlohmann::json& j);

}  // namespace csd::xai
