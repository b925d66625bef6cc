#include "csd/explain/repository.hpp"

#include <fstream>

#include "csd/error.hpp"

namespace csd::xai {

namespace {

constexpr std::size_t kMaxListedOffenders = 10;

void check_record(const XaiSignature& s)
{
    if (s.label != 0 && s.label != 1)
        throw ContractViolation("signature '" + s.window_id + "' has label " + std::to_string(s.label) +
                                " (expected 0 benign or 1 adversarial)");
    if (s.split != kTrainSplit && s.split != kTestSplit)
        throw ContractViolation("signature '" + s.window_id + "' has split tag '" + s.split + "' (expected " +
                                kTrainSplit + " or " + kTestSplit + ")");
    if (s.window_id.empty()) throw ContractViolation("signature without a window id");
    if (s.model_fingerprint.empty()) throw ContractViolation("signature '" + s.window_id + "' has no model fingerprint");
    if (s.values.empty()) throw ContractViolation("signature '" + s.window_id + "' has no values");
}

void write_line(std::ostream& out, const nlohmann::json& j)
{
    out << j.dump() << '\n';
}

}  // namespace

nlohmann::json to_json(const XaiSignature& s)
{
    nlohmann::json j{
        {"id", s.window_id},
        {"model_fingerprint", s.model_fingerprint},
        {"label", s.label},
        {"split", s.split},
        {"values", s.values},
    };
    if (s.self_labeled) j["self_labeled"] = true;
    return j;
}

XaiSignature signature_from_json(const nlohmann::json& j)
{
    if (!j.is_object()) throw SchemaError("signature record must be a JSON object");
    for (const char* key : {"id", "model_fingerprint", "label", "split", "values"})
        if (!j.contains(key)) throw SchemaError(std::string("signature record missing '") + key + "'");
    try {
        XaiSignature s;
        s.window_id = j.at("id").get<std::string>();
        s.model_fingerprint = j.at("model_fingerprint").get<std::string>();
        s.label = j.at("label").get<int>();
        s.split = j.at("split").get<std::string>();
        s.values = j.at("values").get<std::vector<float>>();
        s.self_labeled = j.value("self_labeled", false);
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("malformed signature record: ") + e.what());
    }
}

void SignatureRepository::append(const std::vector<XaiSignature>& signatures)
{
    std::vector<std::string> offenders;
    std::set<std::pair<std::string, std::string>> batch;
    for (const auto& s : signatures) {
        check_record(s);
        auto key = std::make_pair(s.window_id, s.model_fingerprint);
        if (keys_.count(key) || !batch.insert(key).second) offenders.push_back(s.window_id);
    }
    if (!offenders.empty()) {
        std::string msg = "duplicate (window, model) keys rejected:";
        for (std::size_t i = 0; i < offenders.size() && i < kMaxListedOffenders; ++i) msg += " " + offenders[i];
        if (offenders.size() > kMaxListedOffenders)
            msg += " ... (" + std::to_string(offenders.size()) + " in total)";
        throw DuplicateKeyError(msg);
    }
    for (const auto& s : signatures) {
        keys_.emplace(s.window_id, s.model_fingerprint);
        records_.push_back(s);
    }
}

bool SignatureRepository::contains(const std::string& window_id, const std::string& model_fingerprint) const
{
    return keys_.count({window_id, model_fingerprint}) > 0;
}

SignatureMatrix SignatureRepository::dataset(const std::string& split, bool include_self_labeled) const
{
    std::vector<const XaiSignature*> rows;
    for (const auto& s : records_)
        if (s.split == split && (include_self_labeled || !s.self_labeled)) rows.push_back(&s);

    SignatureMatrix m;
    if (rows.empty()) {
        m.x = num::Tensor(num::Shape{0, 0});
        return m;
    }
    m.model_fingerprint = rows.front()->model_fingerprint;
    const std::size_t d = rows.front()->values.size();
    m.x = num::Tensor(num::Shape{rows.size(), d});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& s = *rows[i];
        if (s.model_fingerprint != m.model_fingerprint)
            throw ContractViolation("split '" + split + "' mixes model fingerprints " + m.model_fingerprint + " and " +
                                    s.model_fingerprint);
        if (s.values.size() != d)
            throw ContractViolation("signature '" + s.window_id + "' has length " + std::to_string(s.values.size()) +
                                    ", expected " + std::to_string(d));
        std::copy(s.values.begin(), s.values.end(), m.x.vec().begin() + static_cast<long>(i * d));
        m.y.push_back(s.label);
        m.ids.push_back(s.window_id);
    }
    return m;
}

void SignatureRepository::save(const std::filesystem::path& path, const nlohmann::json& header) const
{
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write signature repository " + path.string());
    nlohmann::json head = header.is_object() ? header : nlohmann::json::object();
    head["schema_version"] = kRepositorySchemaVersion;
    write_line(out, head);
    for (const auto& s : records_) write_line(out, to_json(s));
    if (!out) throw IoError("failed writing signature repository " + path.string());
}

SignatureRepository SignatureRepository::load(const std::filesystem::path& path, nlohmann::json* header)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot open signature repository " + path.string());

    SignatureRepository repo;
    std::string line;
    std::size_t row = 0;
    bool seen_header = false;
    while (std::getline(in, line)) {
        ++row;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError("line " + std::to_string(row) + " of " + path.string() + " is not JSON: " + e.what(),
                             row);
        }
        if (!seen_header) {
            if (!j.is_object() || !j.contains("schema_version"))
                throw SchemaError(path.string() + " does not start with a repository header line");
            if (j.at("schema_version") != kRepositorySchemaVersion)
                throw VersionMismatchError("signature repository schema " + j.at("schema_version").dump() +
                                           " is not supported (expected " +
                                           std::to_string(kRepositorySchemaVersion) + ")");
            if (header) *header = j;
            seen_header = true;
            continue;
        }
        repo.append({signature_from_json(j)});
    }
    if (!seen_header) throw SchemaError(path.string() + " is empty");
    return repo;
}

void SignatureRepository::append_to_file(const std::filesystem::path& path,
                                         const std::vector<XaiSignature>& signatures, const nlohmann::json& header)
{
    if (!std::filesystem::exists(path)) {
        SignatureRepository repo;
        repo.append(signatures);
        repo.save(path, header);
        return;
    }
    SignatureRepository existing = load(path);
    existing.append(signatures);  // validation only; the file is extended in place
    std::ofstream out(path, std::ios::app);
    if (!out) throw IoError("cannot append to signature repository " + path.string());
    for (const auto& s : signatures) write_line(out, to_json(s));
    if (!out) throw IoError("failed appending to signature repository " + path.string());
}

std::size_t SignatureRepository::rebuild(const std::filesystem::path& path)
{
    nlohmann::json header;
    const SignatureRepository repo = load(path, &header);
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    repo.save(tmp, header);
    std::filesystem::rename(tmp, path);
    return repo.size();
}

}  // namespace csd::xai
