#pragma once

#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace descan {

enum class Geometry { baseline, sphere, sphere_draped, plane, plane_draped };
enum class Lighting { baseline, outdoor, studio };
enum class Status { accepted, rejected_generic, rejected_wrong, rejected_grammar, unaudited };
enum class PosTag { noun, adjective, verb, adverb, other };

std::string_view to_string(Geometry g);
std::string_view to_string(Lighting l);
std::string_view to_string(Status s);
std::string_view to_string(PosTag t);
Geometry parse_geometry(std::string_view s);
Lighting parse_lighting(std::string_view s);
Status parse_status(std::string_view s);
PosTag parse_pos_tag(std::string_view s);

inline bool is_rejected(Status s) {
    return s == Status::rejected_generic || s == Status::rejected_wrong || s == Status::rejected_grammar;
}
/// Accepted, or not audited and not cascaded into rejection.
inline bool is_valid(Status s) { return !is_rejected(s); }

struct Describer {
    std::string id;
    int description_count = 0;
};

struct RenderImage {
    std::string image_id;
    std::string material_id;
    Geometry geometry = Geometry::baseline;
    Lighting lighting = Lighting::baseline;
};

struct Description {
    std::string id;
    std::string image_id;
    std::string describer_id;
    std::string text;
    Status status = Status::unaudited;
    std::optional<int> rating;
};

/// Immutable after construction; lookups go through the id indices.
class Corpus {
public:
    Corpus() = default;
    /// Validates referential integrity and id uniqueness; throws DataError.
    Corpus(std::vector<RenderImage> images, std::vector<Description> descriptions);

    const std::vector<Describer>& describers() const noexcept { return describers_; }
    const std::vector<RenderImage>& images() const noexcept { return images_; }
    const std::vector<Description>& descriptions() const noexcept { return descriptions_; }
    std::size_t size() const noexcept { return descriptions_.size(); }

    const Description* find_description(const std::string& id) const;
    const RenderImage* find_image(const std::string& id) const;
    const Describer* find_describer(const std::string& id) const;

    const std::map<std::string, std::vector<PosTag>>& pos_annotations() const noexcept { return pos_; }
    Corpus with_pos_annotations(std::map<std::string, std::vector<PosTag>> pos) const;

    std::size_t valid_count() const;

private:
    void index();

    std::vector<Describer> describers_;
    std::vector<RenderImage> images_;
    std::vector<Description> descriptions_;
    std::map<std::string, std::vector<PosTag>> pos_;
    std::unordered_map<std::string, std::size_t> description_index_;
    std::unordered_map<std::string, std::size_t> image_index_;
    std::unordered_map<std::string, std::size_t> describer_index_;
};

enum class CorpusFormat { jsonl, csv };

Corpus ingest(const std::string& path, CorpusFormat format);
CorpusFormat format_from_path(const std::string& path);

/// Parses a POS annotation JSONL file: {"description_id", "tags":[...]}.
std::map<std::string, std::vector<PosTag>> load_pos_annotations(const std::string& path);

void write_jsonl(const Corpus& corpus, const std::string& path);

// ---------------------------------------------------------------------------
// Collection constraints and audit

enum class ShareDenominator { valid_only, all };

struct ValidationPolicy {
    int min_words = 20;
    int max_words = 100;
    int min_describer_count = 10;
    double max_share = 0.09;
    ShareDenominator share_denominator = ShareDenominator::valid_only;
    int min_valid_per_image = 5;
};

struct LengthFlag {
    std::string description_id;
    int word_count = 0;
    bool under = false;  // otherwise over
    bool operator==(const LengthFlag&) const = default;
};

struct DescriberFlag {
    std::string describer_id;
    int count = 0;
    double share = 0.0;
    bool below_min_count = false;
    bool over_share = false;
    bool operator==(const DescriberFlag&) const = default;
};

struct ImageFlag {
    std::string image_id;
    int valid_count = 0;
    bool operator==(const ImageFlag&) const = default;
};

struct ValidationReport {
    std::vector<LengthFlag> length_flags;
    std::vector<DescriberFlag> describer_flags;
    std::vector<ImageFlag> image_flags;

    bool clean() const { return length_flags.empty() && describer_flags.empty() && image_flags.empty(); }
    bool operator==(const ValidationReport&) const = default;
};

/// Whitespace-separated raw tokens.
int raw_word_count(std::string_view text);

ValidationReport validate(const Corpus& corpus, const ValidationPolicy& policy = {});

struct AuditEntry {
    std::string description_id;
    Status status = Status::accepted;
    std::optional<int> rating;
};

std::vector<AuditEntry> load_audits(const std::string& path);

/// Applies audit outcomes, then rejects every remaining unaudited
/// description of describers whose audited rejection rate exceeds
/// cascade_threshold.
Corpus audit_apply(const Corpus& corpus, const std::vector<AuditEntry>& audits, double cascade_threshold = 0.35);

}  // namespace descan
