#pragma once

#include "sofa/corpus.hpp"

#include "json.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace sofa {

struct probe {
    std::string probe_id;  // stereotype_id + ":" + identity_id
    std::string stereotype_id;
    std::string identity_id;
    category_id category;
    std::string identity;    // normalized identity form
    std::string stereotype;  // stereotype text
    std::string text;        // identity + " " + stereotype
};

// Cross product per category, ordered by (category, stereotype_id, lexicon order).
// Every stereotype category needs >= 2 identities in the lexicon.
std::vector<probe> generate_probes(const std::vector<stereotype> & stereotypes, const lexicon & lex);

enum class dataset_format { jsonl, csv };

dataset_format parse_dataset_format(std::string_view tag);

struct dataset_manifest {
    std::map<std::string, size_t> counts;  // category -> probes
    size_t                        total = 0;
    std::string                   digest;  // sha256 of the dataset file bytes

    nlohmann::ordered_json to_json() const;
};

std::string serialize_probes(const std::vector<probe> & probes, dataset_format format);

// Writes the dataset to `path` and its manifest to `<path>.manifest.json`.
dataset_manifest emit_dataset(const std::vector<probe> & probes, const std::filesystem::path & path,
                              dataset_format format);

std::filesystem::path manifest_path_for(const std::filesystem::path & dataset_path);

// Reads a dataset written by emit_dataset (either format, by extension).
std::vector<probe> read_probes(const std::filesystem::path & path);

}  // namespace sofa
