#include "lvseg/manifest.hpp"

#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace lvseg {

namespace fs = std::filesystem;
using nlohmann::json;

const ManifestCase* Manifest::find(const std::string& id) const {
    for (const auto& c : cases)
        if (c.id == id) return &c;
    return nullptr;
}

Manifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open manifest: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw std::runtime_error("malformed manifest " + path + ": " + e.what());
    }
    Manifest m;
    for (const auto& c : j.at("cases")) {
        ManifestCase mc;
        mc.id = c.at("id").get<std::string>();
        mc.site = c.value("site", "");
        mc.vendor = c.value("vendor", "");
        mc.acpc_z = c.value("acpc_z", 0);
        mc.image = c.value("image", "");
        mc.brain = c.value("brain", "");
        mc.truth = c.value("truth", "");
        mc.ss = c.value("ss", "");
        m.cases.push_back(std::move(mc));
    }
    if (j.contains("failures"))
        for (const auto& f : j.at("failures"))
            m.failures.push_back({f.at("id").get<std::string>(), f.value("reason", "")});
    return m;
}

void save_manifest(const Manifest& m, const std::string& path) {
    json cases = json::array();
    for (const auto& c : m.cases) {
        json jc;
        jc["id"] = c.id;
        jc["site"] = c.site;
        jc["vendor"] = c.vendor;
        jc["acpc_z"] = c.acpc_z;
        jc["image"] = c.image;
        jc["brain"] = c.brain;
        jc["truth"] = c.truth;
        jc["ss"] = c.ss;
        cases.push_back(std::move(jc));
    }
    json failures = json::array();
    for (const auto& f : m.failures) failures.push_back({{"id", f.id}, {"reason", f.reason}});
    json j;
    j["cases"] = std::move(cases);
    j["failures"] = std::move(failures);
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write manifest: " + path);
    out << j.dump(2) << '\n';
}

std::string resolve_path(const std::string& manifest_path, const std::string& rel) {
    if (rel.empty()) throw std::runtime_error("empty path in manifest " + manifest_path);
    return (fs::path(manifest_path).parent_path() / rel).string();
}

std::string write_cohort(const std::vector<PhantomCase>& cases, const std::string& dir) {
    fs::create_directories(dir);
    Manifest m;
    for (const auto& c : cases) {
        ManifestCase mc;
        mc.id = c.case_id.empty() ? c.site_id : c.case_id;
        mc.site = c.site_id;
        mc.vendor = c.vendor;
        mc.acpc_z = c.acpc_z;
        mc.image = mc.id + ".mvol";
        mc.brain = mc.id + "_brain.mmask";
        mc.truth = mc.id + "_truth.mmask";
        write_volume(c.image, (fs::path(dir) / mc.image).string());
        write_volume(c.brain_mask, (fs::path(dir) / mc.brain).string());
        write_volume(c.ventricle_mask, (fs::path(dir) / mc.truth).string());
        m.cases.push_back(std::move(mc));
    }
    const std::string path = (fs::path(dir) / "manifest.json").string();
    save_manifest(m, path);
    return path;
}

}  // namespace lvseg
