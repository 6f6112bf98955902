#include "descan/corpus.hpp"

#include "descan/common.hpp"
#include "descan/csv.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <fstream>
#include <set>
#include <tuple>

namespace descan {

namespace {

template <typename E, std::size_t N>
E parse_enum(std::string_view s, const std::array<std::string_view, N>& names, const char* what) {
    for (std::size_t i = 0; i < N; ++i)
        if (names[i] == s) return static_cast<E>(i);
    throw DataError(std::string("unknown ") + what + " '" + std::string(s) + "'");
}

constexpr std::array<std::string_view, 5> kGeometry{"baseline", "sphere", "sphere_draped", "plane", "plane_draped"};
constexpr std::array<std::string_view, 3> kLighting{"baseline", "outdoor", "studio"};
constexpr std::array<std::string_view, 5> kStatus{"accepted", "rejected_generic", "rejected_wrong",
                                                  "rejected_grammar", "unaudited"};
constexpr std::array<std::string_view, 5> kPos{"noun", "adjective", "verb", "adverb", "other"};

}  // namespace

std::string_view to_string(Geometry g) { return kGeometry[static_cast<std::size_t>(g)]; }
std::string_view to_string(Lighting l) { return kLighting[static_cast<std::size_t>(l)]; }
std::string_view to_string(Status s) { return kStatus[static_cast<std::size_t>(s)]; }
std::string_view to_string(PosTag t) { return kPos[static_cast<std::size_t>(t)]; }
Geometry parse_geometry(std::string_view s) { return parse_enum<Geometry>(s, kGeometry, "geometry"); }
Lighting parse_lighting(std::string_view s) { return parse_enum<Lighting>(s, kLighting, "lighting"); }
Status parse_status(std::string_view s) { return parse_enum<Status>(s, kStatus, "status"); }

PosTag parse_pos_tag(std::string_view s) {
    const std::string t = to_lower(s);
    // Accept common coarse tag-set spellings from external taggers.
    if (t == "noun" || t == "n" || t == "propn") return PosTag::noun;
    if (t == "adjective" || t == "adj" || t == "a") return PosTag::adjective;
    if (t == "verb" || t == "v" || t == "aux") return PosTag::verb;
    if (t == "adverb" || t == "adv" || t == "r") return PosTag::adverb;
    return PosTag::other;
}

Corpus::Corpus(std::vector<RenderImage> images, std::vector<Description> descriptions)
    : images_(std::move(images)), descriptions_(std::move(descriptions)) {
    std::sort(images_.begin(), images_.end(),
              [](const RenderImage& a, const RenderImage& b) { return a.image_id < b.image_id; });
    std::set<std::tuple<std::string, Geometry, Lighting>> triples;
    for (std::size_t i = 0; i < images_.size(); ++i) {
        const auto& im = images_[i];
        if (im.image_id.empty()) throw DataError("image with empty id");
        if (i > 0 && images_[i - 1].image_id == im.image_id) throw DataError("duplicate image id '" + im.image_id + "'");
        if (!triples.emplace(im.material_id, im.geometry, im.lighting).second)
            throw DataError("images share material/geometry/lighting: '" + im.image_id + "'");
    }
    std::map<std::string, int> counts;
    std::set<std::string> ids;
    for (const auto& d : descriptions_) {
        if (d.id.empty()) throw DataError("description with empty id");
        if (!ids.insert(d.id).second) throw DataError("duplicate description id '" + d.id + "'");
        if (d.describer_id.empty()) throw DataError("dangling describer reference in description '" + d.id + "'");
        if (d.rating && (*d.rating < 1 || *d.rating > 5))
            throw DataError("rating out of range in description '" + d.id + "'");
        ++counts[d.describer_id];
    }
    for (auto& [id, n] : counts) describers_.push_back({id, n});
    index();
    for (const auto& d : descriptions_)
        if (!image_index_.count(d.image_id))
            throw DataError("dangling image reference '" + d.image_id + "' in description '" + d.id + "'");
}

void Corpus::index() {
    description_index_.clear();
    image_index_.clear();
    describer_index_.clear();
    for (std::size_t i = 0; i < descriptions_.size(); ++i) description_index_[descriptions_[i].id] = i;
    for (std::size_t i = 0; i < images_.size(); ++i) image_index_[images_[i].image_id] = i;
    for (std::size_t i = 0; i < describers_.size(); ++i) describer_index_[describers_[i].id] = i;
}

const Description* Corpus::find_description(const std::string& id) const {
    auto it = description_index_.find(id);
    return it == description_index_.end() ? nullptr : &descriptions_[it->second];
}

const RenderImage* Corpus::find_image(const std::string& id) const {
    auto it = image_index_.find(id);
    return it == image_index_.end() ? nullptr : &images_[it->second];
}

const Describer* Corpus::find_describer(const std::string& id) const {
    auto it = describer_index_.find(id);
    return it == describer_index_.end() ? nullptr : &describers_[it->second];
}

Corpus Corpus::with_pos_annotations(std::map<std::string, std::vector<PosTag>> pos) const {
    for (const auto& [id, tags] : pos)
        if (!find_description(id)) throw DataError("POS annotation for unknown description '" + id + "'");
    Corpus out = *this;
    out.pos_ = std::move(pos);
    return out;
}

std::size_t Corpus::valid_count() const {
    return static_cast<std::size_t>(std::count_if(descriptions_.begin(), descriptions_.end(),
                                                  [](const Description& d) { return is_valid(d.status); }));
}

// ---------------------------------------------------------------------------
// Ingestion

namespace {

struct RawRecord {
    std::size_t line = 0;
    std::string id, image_id, material_id, geometry, lighting, describer_id, text, status;
    std::optional<int> rating;
};

std::optional<int> parse_rating(const std::string& s, std::size_t line, const std::string& path) {
    const std::string t = trim(s);
    if (t.empty()) return std::nullopt;
    int v = 0;
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc{} || ptr != t.data() + t.size()) throw DataError("rating is not an integer", path, line);
    return v;
}

std::string json_string(const nlohmann::json& rec, const char* key) {
    auto it = rec.find(key);
    if (it == rec.end() || it->is_null()) return {};
    if (it->is_string()) return it->get<std::string>();
    if (it->is_number_integer()) return std::to_string(it->get<long long>());
    throw DataError(std::string("field '") + key + "' must be a string");
}

std::vector<RawRecord> read_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file", path);
    std::vector<RawRecord> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (trim(line).empty()) continue;
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw DataError(std::string("parse error: ") + e.what(), path, n);
        }
        if (!rec.is_object()) throw DataError("record is not a JSON object", path, n);
        RawRecord r;
        r.line = n;
        try {
            r.id = json_string(rec, "id");
            r.image_id = json_string(rec, "image_id");
            r.material_id = json_string(rec, "material_id");
            r.geometry = json_string(rec, "geometry");
            r.lighting = json_string(rec, "lighting");
            r.describer_id = json_string(rec, "describer_id");
            r.text = json_string(rec, "text");
            r.status = json_string(rec, "status");
            if (auto it = rec.find("rating"); it != rec.end() && !it->is_null()) {
                if (!it->is_number_integer()) throw DataError("rating is not an integer");
                r.rating = it->get<int>();
            }
        } catch (const DataError& e) {
            throw DataError(e.what(), path, n);
        }
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<RawRecord> read_csv(const std::string& path) {
    const auto table = csv::read_table(path);
    for (const char* required : {"id", "image_id", "describer_id", "text"})
        if (table.column(required) < 0) throw DataError(std::string("missing column '") + required + "'", path, 1);
    std::vector<RawRecord> out;
    for (const auto& row : table.rows) {
        RawRecord r;
        r.line = row.line;
        auto get = [&](const char* k) { return table.get(row, k).value_or(std::string{}); };
        r.id = get("id");
        r.image_id = get("image_id");
        r.material_id = get("material_id");
        r.geometry = get("geometry");
        r.lighting = get("lighting");
        r.describer_id = get("describer_id");
        r.text = get("text");
        r.status = get("status");
        r.rating = parse_rating(get("rating"), row.line, path);
        out.push_back(std::move(r));
    }
    return out;
}

Corpus build(const std::vector<RawRecord>& records, const std::string& path) {
    struct ImageInfo {
        std::optional<RenderImage> meta;
        std::size_t first_line = 0;
    };
    std::map<std::string, ImageInfo> images;
    std::set<std::string> ids;
    std::vector<Description> descriptions;
    descriptions.reserve(records.size());
    for (const auto& r : records) {
        auto fail = [&](const std::string& msg) { throw DataError(msg, path, r.line); };
        if (r.id.empty()) fail("missing required field 'id'");
        if (r.image_id.empty()) fail("missing required field 'image_id'");
        if (r.text.empty()) fail("missing required field 'text'");
        if (r.describer_id.empty()) fail("dangling describer reference (empty describer_id)");
        if (!ids.insert(r.id).second) fail("duplicate description id '" + r.id + "'");
        if (r.rating && (*r.rating < 1 || *r.rating > 5)) fail("rating out of range");

        auto& info = images[r.image_id];
        if (info.first_line == 0) info.first_line = r.line;
        if (!r.material_id.empty()) {
            RenderImage im;
            im.image_id = r.image_id;
            im.material_id = r.material_id;
            try {
                im.geometry = r.geometry.empty() ? Geometry::baseline : parse_geometry(r.geometry);
                im.lighting = r.lighting.empty() ? Lighting::baseline : parse_lighting(r.lighting);
            } catch (const DataError& e) {
                fail(e.what());
            }
            if (info.meta && (info.meta->material_id != im.material_id || info.meta->geometry != im.geometry ||
                              info.meta->lighting != im.lighting))
                fail("conflicting metadata for image '" + r.image_id + "'");
            info.meta = im;
        }

        Description d;
        d.id = r.id;
        d.image_id = r.image_id;
        d.describer_id = r.describer_id;
        d.text = r.text;
        try {
            d.status = r.status.empty() ? Status::unaudited : parse_status(r.status);
        } catch (const DataError& e) {
            fail(e.what());
        }
        d.rating = r.rating;
        descriptions.push_back(std::move(d));
    }
    std::vector<RenderImage> out_images;
    for (auto& [id, info] : images) {
        if (!info.meta) throw DataError("dangling image reference '" + id + "' (no material_id)", path, info.first_line);
        out_images.push_back(*info.meta);
    }
    try {
        return Corpus(std::move(out_images), std::move(descriptions));
    } catch (const DataError& e) {
        throw DataError(e.what(), path);
    }
}

}  // namespace

CorpusFormat format_from_path(const std::string& path) {
    auto ends = [&](std::string_view suf) {
        return path.size() >= suf.size() && to_lower(path.substr(path.size() - suf.size())) == suf;
    };
    return ends(".csv") ? CorpusFormat::csv : CorpusFormat::jsonl;
}

Corpus ingest(const std::string& path, CorpusFormat format) {
    const auto records = format == CorpusFormat::jsonl ? read_jsonl(path) : read_csv(path);
    return build(records, path);
}

std::map<std::string, std::vector<PosTag>> load_pos_annotations(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file", path);
    std::map<std::string, std::vector<PosTag>> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (trim(line).empty()) continue;
        try {
            const auto rec = nlohmann::json::parse(line);
            const std::string id = json_string(rec, "description_id");
            if (id.empty()) throw DataError("missing description_id");
            std::vector<PosTag> tags;
            for (const auto& t : rec.at("tags")) tags.push_back(parse_pos_tag(t.get<std::string>()));
            if (!out.emplace(id, std::move(tags)).second) throw DataError("duplicate description_id '" + id + "'");
        } catch (const nlohmann::json::exception& e) {
            throw DataError(std::string("parse error: ") + e.what(), path, n);
        } catch (const DataError& e) {
            throw DataError(e.what(), path, n);
        }
    }
    return out;
}

void write_jsonl(const Corpus& corpus, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write file", path);
    for (const auto& d : corpus.descriptions()) {
        const auto* im = corpus.find_image(d.image_id);
        nlohmann::ordered_json rec;
        rec["id"] = d.id;
        rec["image_id"] = d.image_id;
        rec["material_id"] = im->material_id;
        rec["geometry"] = to_string(im->geometry);
        rec["lighting"] = to_string(im->lighting);
        rec["describer_id"] = d.describer_id;
        rec["text"] = d.text;
        rec["status"] = to_string(d.status);
        if (d.rating) rec["rating"] = *d.rating;
        else rec["rating"] = nullptr;
        out << rec.dump() << '\n';
    }
}

// ---------------------------------------------------------------------------
// Validation and audit

int raw_word_count(std::string_view text) { return static_cast<int>(split_whitespace(text).size()); }

ValidationReport validate(const Corpus& corpus, const ValidationPolicy& policy) {
    ValidationReport report;
    std::map<std::string, int> valid_by_describer;
    std::map<std::string, int> valid_by_image;
    std::set<std::string> described;
    std::size_t valid_total = 0;
    for (const auto& d : corpus.descriptions()) {
        described.insert(d.image_id);
        const int wc = raw_word_count(d.text);
        if (wc < policy.min_words) report.length_flags.push_back({d.id, wc, true});
        else if (wc > policy.max_words) report.length_flags.push_back({d.id, wc, false});
        if (is_valid(d.status)) {
            ++valid_total;
            ++valid_by_describer[d.describer_id];
            ++valid_by_image[d.image_id];
        }
    }
    const bool valid_only = policy.share_denominator == ShareDenominator::valid_only;
    const double denom = valid_only ? static_cast<double>(valid_total) : static_cast<double>(corpus.size());
    for (const auto& w : corpus.describers()) {
        DescriberFlag f;
        f.describer_id = w.id;
        f.count = w.description_count;
        const int numer = valid_only ? valid_by_describer[w.id] : w.description_count;
        f.share = denom > 0 ? numer / denom : 0.0;
        f.below_min_count = w.description_count < policy.min_describer_count;
        f.over_share = denom > 0 && f.share > policy.max_share;
        if (f.below_min_count || f.over_share) report.describer_flags.push_back(f);
    }
    for (const auto& im : corpus.images()) {
        const auto it = valid_by_image.find(im.image_id);
        const int n = it == valid_by_image.end() ? 0 : it->second;
        // Images without any description are variant renders, not subject to the quota.
        if (described.count(im.image_id) && n < policy.min_valid_per_image) report.image_flags.push_back({im.image_id, n});
    }
    return report;
}

std::vector<AuditEntry> load_audits(const std::string& path) {
    const auto table = csv::read_table(path);
    std::vector<AuditEntry> out;
    for (const auto& row : table.rows) {
        AuditEntry e;
        try {
            e.description_id = table.at(row, "description_id");
            e.status = parse_status(table.at(row, "status"));
        } catch (const DataError& err) {
            throw DataError(err.what(), path, row.line);
        }
        e.rating = parse_rating(table.get(row, "rating").value_or(""), row.line, path);
        out.push_back(std::move(e));
    }
    return out;
}

Corpus audit_apply(const Corpus& corpus, const std::vector<AuditEntry>& audits, double cascade_threshold) {
    if (!(cascade_threshold > 0.0 && cascade_threshold <= 1.0))
        throw std::invalid_argument("cascade threshold must be in (0, 1]");
    std::vector<Description> descriptions = corpus.descriptions();
    std::unordered_map<std::string, std::size_t> where;
    for (std::size_t i = 0; i < descriptions.size(); ++i) where[descriptions[i].id] = i;
    for (const auto& a : audits) {
        auto it = where.find(a.description_id);
        if (it == where.end()) throw DataError("unknown description id '" + a.description_id + "'");
        if (a.status == Status::unaudited) throw DataError("audit outcome cannot be 'unaudited'");
        if (a.rating && (*a.rating < 1 || *a.rating > 5)) throw DataError("rating out of range");
        auto& d = descriptions[it->second];
        d.status = a.status;
        d.rating = a.rating;
    }
    std::map<std::string, std::pair<int, int>> audited;  // describer -> (rejected, audited)
    for (const auto& d : descriptions) {
        if (d.status == Status::unaudited) continue;
        auto& [rej, tot] = audited[d.describer_id];
        ++tot;
        if (is_rejected(d.status)) ++rej;
    }
    for (auto& d : descriptions) {
        if (d.status != Status::unaudited) continue;
        const auto it = audited.find(d.describer_id);
        if (it == audited.end()) continue;
        const auto [rej, tot] = it->second;
        if (static_cast<double>(rej) / tot > cascade_threshold) d.status = Status::rejected_generic;
    }
    Corpus out(corpus.images(), std::move(descriptions));
    return out.with_pos_annotations(corpus.pos_annotations());
}

}  // namespace descan
