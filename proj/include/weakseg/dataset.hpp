#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace weakseg {

/// One sample of the on-disk layout, paired by file stem:
///   root/images/<stem>.png           input image (required)
///   root/masks_precise/<stem>.png    precise annotation (optional)
///   root/masks_weak/<stem>.png       weak annotation (optional)
///   root/probmaps/<stem>.pmap        imported probability map (optional)
///   root/splits/test.txt             one test stem per line (optional)
struct DatasetEntry {
    std::string stem;
    std::filesystem::path image;
    std::optional<std::filesystem::path> precise;
    std::optional<std::filesystem::path> weak;
    std::optional<std::filesystem::path> probmap;
    bool is_test = false;
};

struct Dataset {
    std::filesystem::path root;
    std::vector<DatasetEntry> entries;  // sorted by stem

    std::vector<const DatasetEntry*> train() const {
        std::vector<const DatasetEntry*> out;
        for (const auto& e : entries)
            if (!e.is_test) out.push_back(&e);
        return out;
    }
    std::vector<const DatasetEntry*> test() const {
        std::vector<const DatasetEntry*> out;
        for (const auto& e : entries)
            if (e.is_test) out.push_back(&e);
        return out;
    }
};

inline Dataset scan_dataset(const std::filesystem::path& root) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(root / "images"))
        throw std::runtime_error("dataset: missing images/ under " + root.string());

    Dataset ds;
    ds.root = root;
    for (const auto& entry : fs::directory_iterator(root / "images")) {
        if (!entry.is_regular_file() || entry.path().extension() != ".png") continue;
        DatasetEntry e;
        e.stem = entry.path().stem().string();
        e.image = entry.path();
        const fs::path precise = root / "masks_precise" / (e.stem + ".png");
        const fs::path weak = root / "masks_weak" / (e.stem + ".png");
        const fs::path pmap = root / "probmaps" / (e.stem + ".pmap");
        if (fs::is_regular_file(precise)) e.precise = precise;
        if (fs::is_regular_file(weak)) e.weak = weak;
        if (fs::is_regular_file(pmap)) e.probmap = pmap;
        ds.entries.push_back(std::move(e));
    }
    std::sort(ds.entries.begin(), ds.entries.end(),
              [](const DatasetEntry& a, const DatasetEntry& b) { return a.stem < b.stem; });

    const fs::path split_file = root / "splits" / "test.txt";
    if (fs::is_regular_file(split_file)) {
        std::set<std::string> stems;
        std::ifstream is(split_file);
        std::string line;
        while (std::getline(is, line)) {
            while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
            if (!line.empty()) stems.insert(line);
        }
        for (auto& e : ds.entries)
            if (stems.erase(e.stem)) e.is_test = true;
        if (!stems.empty())
            throw std::runtime_error("dataset: split stem '" + *stems.begin() +
                                     "' has no matching image in " + root.string());
    }
    return ds;
}

}  // namespace weakseg
