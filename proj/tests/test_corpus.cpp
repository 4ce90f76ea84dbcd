#include <random>

#include <gtest/gtest.h>

#include "inter/corpus.hpp"
#include "support.hpp"

using namespace inter;
using testing_support::TempDir;
using testing_support::write_text;

TEST(Tokenize, LowercasesAndSplitsOnPunctuation) {
    EXPECT_EQ(tokenize("Hello, World!"), (TokenStream{"hello", "world"}));
    EXPECT_EQ(tokenize("how long does it take to get a master's degree"),
              (TokenStream{"how", "long", "does", "it", "take", "to", "get", "a", "master", "s", "degree"}));
    EXPECT_TRUE(tokenize("").empty());
    EXPECT_TRUE(tokenize("  ,;-- ").empty());
}

TEST(Tokenize, HandlesUnicodeLettersAndDigits) {
    EXPECT_EQ(tokenize("Ünïcode café 2023"), (TokenStream{"ünïcode", "café", "2023"}));
    EXPECT_EQ(tokenize("ΑΒΓ«δεζ"), (TokenStream{"αβγ", "δεζ"}));
}

TEST(Tokenize, InvalidUtf8ActsAsSeparator) {
    EXPECT_EQ(tokenize(std::string("ab\xff" "cd")), (TokenStream{"ab", "cd"}));
}

TEST(Tokenize, IsIdempotentOnRandomInput) {
    std::mt19937_64 rng(11);
    const std::vector<std::string> pieces = {"a", "B", "z9", " ", ",", "é", "Ω", "\t", "-", "x_y", "\xe4\xb8\xad", "'"};
    std::uniform_int_distribution<std::size_t> pick(0, pieces.size() - 1), len(0, 40);
    for (int trial = 0; trial < 500; ++trial) {
        std::string s;
        for (std::size_t i = 0, n = len(rng); i < n; ++i) s += pieces[pick(rng)];
        auto once = tokenize(s);
        EXPECT_EQ(tokenize(join(once)), once) << s;
    }
}

TEST(Truncate, KeepsFirstWordsOnly) {
    EXPECT_EQ(truncate_tokens("a b c d", 2), "a b");
    EXPECT_EQ(truncate_tokens("a b", 5), "a b");
    EXPECT_EQ(truncate_tokens("", 3), "");
    EXPECT_EQ(truncate_tokens("  lead   spaced words  ", 2), "  lead   spaced");
    EXPECT_THROW(truncate_tokens("a", 0), ValidationError);
}

TEST(Truncate, PropertyWordBoundAndIdentity) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 300; ++trial) {
        std::string text = testing_support::random_text(rng, 50, 600);
        std::uniform_int_distribution<std::size_t> lim(1, 400);
        const std::size_t n = lim(rng);
        auto t = truncate_tokens(text, n);
        EXPECT_LE(count_words(t), n);
        EXPECT_EQ(text.rfind(t, 0), 0u);  // a prefix
        if (count_words(text) <= n) EXPECT_EQ(t, text);
        else EXPECT_EQ(count_words(t), n);
    }
}

TEST(Truncate, DefaultLimitIs256) {
    std::string text;
    for (int i = 0; i < 300; ++i) text += "w" + std::to_string(i) + " ";
    auto t = truncate_tokens(text);
    EXPECT_EQ(count_words(t), 256u);
    EXPECT_EQ(t.substr(t.size() - 4), "w255");
}

TEST(Stemmer, StripsPlurals) {
    EXPECT_EQ(s_stem("queries"), "query");
    EXPECT_EQ(s_stem("dogs"), "dog");
    EXPECT_EQ(s_stem("horses"), "horse");
    EXPECT_EQ(s_stem("glass"), "glass");
    EXPECT_EQ(s_stem("is"), "is");
}

TEST(Analyzer, AppliesStopwordsAndStemming) {
    Analyzer a(AnalyzerOptions{true, {"the", "of"}});
    EXPECT_EQ(a.analyze("The Queries of dogs"), (TokenStream{"query", "dog"}));
    Analyzer plain{AnalyzerOptions{}};
    EXPECT_EQ(plain.analyze("The dogs"), (TokenStream{"the", "dogs"}));
}

TEST(LoadCorpus, ReadsBeirJsonl) {
    TempDir dir;
    write_text(dir.file("c.jsonl"),
               "{\"_id\":\"d2\",\"title\":\"T\",\"text\":\"second\"}\n"
               "\n"
               "{\"_id\":\"d1\",\"title\":\"\",\"text\":\"first\"}\r\n"
               "{\"_id\":\"d3\",\"text\":\"third\"}\n");
    LoadReport rep;
    auto c = load_corpus(dir.file("c.jsonl"), CorpusFormat::BeirJsonl, {}, &rep);
    ASSERT_EQ(c.size(), 3u);
    EXPECT_EQ(rep.records, 3u);
    EXPECT_EQ(c[0].id, "d1");
    EXPECT_EQ(c.at("d2").full_text(), "T second");
    EXPECT_EQ(c.at("d1").full_text(), "first");
    EXPECT_EQ(c.at("d3").full_text(), "third");
    EXPECT_EQ(c.find("nope"), nullptr);
    EXPECT_THROW(c.at("nope"), NotFoundError);
}

TEST(LoadCorpus, DuplicateIdIsFatalAndNamed) {
    TempDir dir;
    write_text(dir.file("c.jsonl"),
               "{\"_id\":\"x\",\"text\":\"a\"}\n{\"_id\":\"y\",\"text\":\"b\"}\n{\"_id\":\"x\",\"text\":\"c\"}\n");
    try {
        load_corpus(dir.file("c.jsonl"), CorpusFormat::BeirJsonl);
        FAIL() << "expected DuplicateIdError";
    } catch (const DuplicateIdError& e) {
        EXPECT_EQ(e.id(), "x");
        EXPECT_NE(std::string(e.what()).find("x"), std::string::npos);
    }
}

TEST(LoadCorpus, TsvMapsIdAndText) {
    TempDir dir;
    write_text(dir.file("c.tsv"), "7\tThe quick fox\n8\twith\ttab\n");
    auto c = load_corpus(dir.file("c.tsv"), CorpusFormat::Tsv);
    ASSERT_EQ(c.size(), 2u);
    EXPECT_EQ(c.at("7"), (Document{"7", std::nullopt, "The quick fox"}));
    EXPECT_EQ(c.at("8").text, "with\ttab");
}

TEST(LoadCorpus, MalformedLinesSkippedOrFatal) {
    TempDir dir;
    write_text(dir.file("c.jsonl"), "{\"_id\":\"a\",\"text\":\"ok\"}\nnot json\n{\"text\":\"no id\"}\n");
    LoadReport rep;
    auto c = load_corpus(dir.file("c.jsonl"), CorpusFormat::BeirJsonl, {}, &rep);
    EXPECT_EQ(c.size(), 1u);
    EXPECT_EQ(rep.skipped, 2u);
    ASSERT_EQ(rep.warnings.size(), 2u);
    EXPECT_NE(rep.warnings[0].find(":2:"), std::string::npos);
    EXPECT_THROW(load_corpus(dir.file("c.jsonl"), CorpusFormat::BeirJsonl, LoadOptions{true}), FormatError);
}

TEST(LoadCorpus, MissingFileAndBadFormat) {
    EXPECT_THROW(load_corpus("/nonexistent/corpus.jsonl", CorpusFormat::BeirJsonl), IoError);
    EXPECT_THROW(parse_corpus_format("xml"), ValidationError);
    EXPECT_EQ(parse_corpus_format("tsv"), CorpusFormat::Tsv);
}

TEST(LoadQueries, KeepsFileOrderAndRejectsDuplicates) {
    TempDir dir;
    write_text(dir.file("q.tsv"), "q2\t  second query \nq1\tfirst\n");
    auto qs = load_queries(dir.file("q.tsv"));
    ASSERT_EQ(qs.size(), 2u);
    EXPECT_EQ(qs[0].id, "q2");
    EXPECT_EQ(qs[0].text, "second query");
    write_text(dir.file("d.tsv"), "q1\ta\nq1\tb\n");
    EXPECT_THROW(load_queries(dir.file("d.tsv")), DuplicateIdError);
    write_text(dir.file("e.tsv"), "q1\t   \n");
    EXPECT_THROW(load_queries(dir.file("e.tsv"), LoadOptions{true}), FormatError);
}

TEST(Corpus, SortedByIdRegardlessOfInputOrder) {
    std::mt19937_64 rng(3);
    auto docs = testing_support::random_documents(rng, 40, 10, 5);
    std::shuffle(docs.begin(), docs.end(), rng);
    Corpus c(docs);
    for (std::size_t i = 1; i < c.size(); ++i) EXPECT_LT(c[i - 1].id, c[i].id);
}
