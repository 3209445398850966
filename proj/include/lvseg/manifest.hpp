#pragma once

#include <optional>
#include <string>
#include <vector>

#include "lvseg/phantom.hpp"

namespace lvseg {

// Cohort manifest: one JSON file per cohort directory mapping case ids to
// volume/mask files (paths relative to the manifest location) plus the
// failure list kept by batch operations.

struct ManifestCase {
    std::string id;
    std::string site;
    std::string vendor;
    int acpc_z = 0;
    std::string image;  // .mvol
    std::string brain;  // .mmask
    std::string truth;  // .mmask, ground-truth ventricles (may be empty)
    std::string ss;     // .mmask, silver-standard ventricles (may be empty)
};

struct ManifestFailure {
    std::string id;
    std::string reason;
};

struct Manifest {
    std::vector<ManifestCase> cases;
    std::vector<ManifestFailure> failures;

    const ManifestCase* find(const std::string& id) const;
};

Manifest load_manifest(const std::string& path);
void save_manifest(const Manifest& m, const std::string& path);

// Resolves a manifest-relative file path against the manifest's directory.
std::string resolve_path(const std::string& manifest_path, const std::string& rel);

// Writes a generated cohort (images + masks + manifest.json) into dir and
// returns the manifest path.
std::string write_cohort(const std::vector<PhantomCase>& cases, const std::string& dir);

}  // namespace lvseg
