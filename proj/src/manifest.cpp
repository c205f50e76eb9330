#include "objclear/manifest.hpp"

#include <fstream>

#include "objclear/error.hpp"

namespace objclear {

std::vector<Json> read_jsonl(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open manifest: " + path.string());
    std::vector<Json> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(Json::parse(line));
        } catch (const nlohmann::json::parse_error& e) {
            throw InvalidInput(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
        if (!out.back().is_object()) {
            throw InvalidInput(path.string() + ":" + std::to_string(lineno) + ": record is not an object");
        }
    }
    return out;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<Json>& records) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path);
    if (!os) throw IoError("cannot write manifest: " + path.string());
    for (const Json& r : records) os << r.dump() << '\n';
}

void write_json(const std::filesystem::path& path, const Json& value) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path);
    if (!os) throw IoError("cannot write file: " + path.string());
    os << value.dump(2) << '\n';
}

Json read_json(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open file: " + path.string());
    try {
        return Json::parse(is);
    } catch (const nlohmann::json::parse_error& e) {
        throw InvalidInput(path.string() + ": " + e.what());
    }
}

std::filesystem::path manifest_path(const Json& record, const std::string& field,
                                    const std::filesystem::path& base, std::size_t line) {
    if (!record.contains(field) || !record.at(field).is_string()) {
        throw InvalidInput("manifest record " + std::to_string(line) + " lacks string field \"" + field + "\"");
    }
    std::filesystem::path p = record.at(field).get<std::string>();
    if (p.is_relative()) p = base / p;
    if (!std::filesystem::exists(p)) {
        throw IoError("missing file " + p.string() + " (field \"" + field + "\", manifest record " +
                      std::to_string(line) + ")");
    }
    return p;
}

}  // namespace objclear
