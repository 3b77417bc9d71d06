#include <doctest.h>

#include <sstream>

#include "generators.hpp"
#include "protocol.hpp"
#include "temp_dir.hpp"

using namespace kfarm;
using namespace kfarm::test;

namespace {

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line))
        out.push_back(line);
    return out;
}

std::string serve_session(WorkerSession& session, const std::string& input) {
    std::istringstream in(input);
    std::ostringstream out;
    session.serve(in, out);
    return out.str();
}

} // namespace

TEST_CASE("frame encoding examples") {
    CHECK(encode(Message::request(1, Command::info)) == ">REQ 1 INFO\n>END\n");
    CHECK(encode(Message::ok(1, {"{1.2}"})) == ">OK 1\n|{1.2}\n>END\n");
    CHECK(encode(Message::error(7, kErrBadTask)) == ">ERR 7 BADTASK\n>END\n");
    CHECK(encode(Message::request(3, Command::setg, "q", {"3.5"})) ==
          ">REQ 3 SETG q\n|3.5\n>END\n");
}

TEST_CASE("frame decoding examples and errors") {
    Message m = decode({">REQ 3 SETG q", "|3.5", ">END"});
    CHECK(m.kind == MsgKind::request);
    CHECK(m.command == Command::setg);
    CHECK(m.id == 3);
    CHECK(m.arg == "q");
    REQUIRE(m.payload.size() == 1);
    CHECK(m.payload[0] == "3.5");

    CHECK_THROWS_AS(decode({">REQ 1 INFO", "|x"}), Error); // missing >END
    CHECK_THROWS_AS(decode({">NOPE 1", ">END"}), Error);
    CHECK_THROWS_AS(decode({">REQ x INFO", ">END"}), Error);
    CHECK_THROWS_AS(decode({">REQ 0 INFO", ">END"}), Error);
    CHECK_THROWS_AS(decode({">REQ 1 FROB", ">END"}), Error);
    CHECK_THROWS_AS(decode({">OK 1", "stray", ">END"}), Error);
    CHECK_THROWS_AS(decode({}), Error);
}

TEST_CASE("decode is the inverse of encode over random frames") {
    Rng rng(555);
    for (int i = 0; i < 1200; ++i) {
        Message m = random_message(rng);
        CAPTURE(encode(m));
        CHECK(decode(split_lines(encode(m))) == m);
    }
}

TEST_CASE("task expressions parse and print") {
    TaskExpr t = parse_task("tridiag[ns, 0, 1.2, 2.1]");
    CHECK(t.name == "tridiag");
    REQUIRE(t.args.size() == 4);
    CHECK(std::get<std::string>(t.args[0]) == "ns");
    CHECK(std::get<Value>(t.args[1]) == Value::integer(0));
    CHECK(print_task(t) == "tridiag[ns, 0, 1.2, 2.1]");

    TaskExpr bare = parse_task("eigen_demo");
    CHECK(bare.name == "eigen_demo");
    CHECK(bare.args.empty());

    TaskExpr nested = parse_task("chop[{1e-22, {2.0}}]");
    CHECK(std::get<Value>(nested.args[0]) ==
          parse_value("{1e-22, {2.0}}"));

    TaskExpr strings = parse_task("plot[pts, \"x,label\", \"y]label\"]");
    CHECK(std::get<Value>(strings.args[1]) == Value::text("x,label"));
    CHECK(std::get<Value>(strings.args[2]) == Value::text("y]label"));

    CHECK_THROWS_AS(parse_task("tridiag[1,"), ParseError);
    // flat calls only: composition goes through globals, not nesting
    CHECK_THROWS_AS(parse_task("eigen[dot3[m1, m2, m3]]"), ParseError);
    CHECK_THROWS_AS(parse_task("7up[1]"), ParseError);
    CHECK_THROWS_AS(parse_task("f[1] junk"), ParseError);

    // round trip over printed form
    Rng rng(9);
    for (int i = 0; i < 50; ++i) {
        TaskExpr expr;
        expr.name = "task_" + std::to_string(rng.next_u64() % 100);
        std::size_t n = rng.next_u64() % 4;
        for (std::size_t j = 0; j < n; ++j) {
            if (rng.next_u64() % 2)
                expr.args.emplace_back(std::in_place_index<0>,
                                       Value::real(rng.next_unit()));
            else
                expr.args.emplace_back(std::in_place_index<1>, "g" + std::to_string(j));
        }
        std::string printed = print_task(expr);
        TaskExpr back = parse_task(printed);
        CHECK(print_task(back) == printed);
    }
}

TEST_CASE("eval_task dispatches the vocabulary") {
    Env env;
    Rng rng(4);

    CHECK(eval_task(parse_task("tridiag[2, 0, 2.6, 1.8]"), env, rng) ==
          parse_value("{{0.0, 2.6}, {1.8, 0.0}}"));
    CHECK(eval_task(parse_task("fill[2, 0, 1.213]"), env, rng) ==
          parse_value("{{0.0, 1.213}, {1.213, 0.0}}"));

    env.bind("m1", parse_value("{{0, 1.2}, {2.1, 0}}"));
    env.bind("m2", parse_value("{{0, 2.6}, {1.8, 0}}"));
    env.bind("m3", parse_value("{{0, 2}, {3, 0}}"));
    Value prod = eval_task(parse_task("dot3[m1, m2, m3]"), env, rng);
    Value eigs = eval_task(parse_task("eigen[" + print_value(prod) + "]"),
                           env, rng);
    REQUIRE(eigs.as_list().size() == 2);
    CHECK(eigs.as_list()[0].as_real() ==
          doctest::Approx(std::sqrt(70.7616)).epsilon(1e-10));

    CHECK(eval_task(parse_task("matmul[m1, m2]"), env, rng) ==
          eval_task(parse_task("matmul[m1, m2]"), env, rng));

    Value table = eval_task(parse_task("random_table[3]"), env, rng);
    CHECK(table.as_list().size() == 3);

    CHECK(eval_task(parse_task("chop[{1e-22, 5.0}]"), env, rng) ==
          parse_value("{0, 5.0}"));
    CHECK(eval_task(parse_task("chop[{0.5}, 1.0]"), env, rng) ==
          parse_value("{0}"));

    env.bind("pts", parse_value("{{0.0, 0.0}, {1.0, 2.0}}"));
    Value fig = eval_task(parse_task("plot[pts, \"a\", \"b\"]"), env, rng);
    CHECK(fig.as_list()[0] == Value::text("plot"));

    CHECK_THROWS_AS(eval_task(parse_task("nosuch[1]"), env, rng), Error);
    CHECK_THROWS_AS(eval_task(parse_task("tridiag[zz, 0, 1, 2]"), env, rng),
                    Error);
    CHECK_THROWS_AS(eval_task(parse_task("tridiag[1, 2]"), env, rng), Error);
    CHECK_THROWS_AS(eval_task(parse_task("fill[2.5, 0, 1]"), env, rng), Error);
    CHECK_THROWS_AS(eval_task(parse_task("eigen[{1, 2}]"), env, rng), Error);
}

TEST_CASE("builder evaluation leaves the environment untouched") {
    Env env;
    env.bind("ns", Value::integer(3));
    Rng rng(6);
    auto before = env.bindings();
    eval_task(parse_task("tridiag[ns, 0, 1.2, 2.1]"), env, rng);
    eval_task(parse_task("fill[ns, 0, 1.213]"), env, rng);
    eval_task(parse_task("random_table[4]"), env, rng);
    CHECK(env.bindings() == before);
}

TEST_CASE("worker session: setg, eval, info") {
    Rng rng(1);
    WorkerSession session(rng);
    std::string out = serve_session(
        session, ">REQ 1 INFO\n>END\n"
                 ">REQ 2 SETG ns\n|2\n>END\n"
                 ">REQ 3 EVAL\n|tridiag[ns, 0, 1.2, 2.1]\n>END\n"
                 ">REQ 4 CLOSE\n>END\n");
    auto lines = split_lines(out);
    REQUIRE(lines.size() >= 8);
    CHECK(lines[0] == ">OK 1");
    Value info = parse_value(lines[1].substr(1));
    REQUIRE(info.as_list().size() == 4);
    CHECK(info.as_list()[2].is_integer()); // pid
    CHECK(lines[3] == ">OK 2");
    CHECK(lines[5] == ">OK 3");
    CHECK(parse_value(lines[6].substr(1)) ==
          parse_value("{{0.0, 1.2}, {2.1, 0.0}}"));
    CHECK(lines[7] == ">END");
}

TEST_CASE("worker session: export then read round-trips a matrix") {
    TempDir tmp;
    Rng rng(2);
    WorkerSession session(rng, tmp.path());
    std::string out = serve_session(
        session, ">REQ 1 SETG ns\n|2\n>END\n"
                 ">REQ 2 EXPORT data1.dat\n|tridiag[ns, 0, 1.2, 2.1]\n>END\n"
                 ">REQ 3 READ data1.dat\n>END\n"
                 ">REQ 4 CLOSE\n>END\n");
    auto lines = split_lines(out);
    CHECK(lines[0] == ">OK 1");
    CHECK(lines[2] == ">OK 2");
    CHECK(read_file(tmp.file("data1.dat")) == "0 1.2\n2.1 0\n");
    CHECK(lines[4] == ">OK 3");
    CHECK(parse_value(lines[5].substr(1)) == parse_value("{0, 1.2, 2.1, 0}"));
}

TEST_CASE("worker session: export accepts literal values too") {
    TempDir tmp;
    Rng rng(3);
    WorkerSession session(rng, tmp.path());
    serve_session(session,
                  ">REQ 1 EXPORT lit.dat\n|{{1.5, 2}, {3, 4}}\n>END\n"
                  ">REQ 2 EXPORT scalar.dat\n|42\n>END\n");
    CHECK(read_file(tmp.file("lit.dat")) == "1.5 2\n3 4\n");
    CHECK(read_file(tmp.file("scalar.dat")) == "42\n");
}

TEST_CASE("worker session: errors carry stable codes and the loop survives") {
    TempDir tmp;
    Rng rng(5);
    WorkerSession session(rng, tmp.path());
    std::string out = serve_session(
        session,
        "garbage\n>END\n"                            // undecodable
        ">REQ 0 INFO\n>END\n"                        // bad id
        ">REQ 5 FROB\n>END\n"                        // unknown command
        ">REQ 6 EVAL\n|nosuch[1]\n>END\n"            // unknown task
        ">REQ 7 EVAL\n|tridiag[zz, 0, 1, 2]\n>END\n" // unbound identifier
        ">REQ 8 EVAL\n|{not a task\n>END\n"          // unparsable payload
        ">REQ 9 READ nope.dat\n>END\n"               // io failure
        ">REQ 10 INFO\n>END\n"                       // still serving
        ">REQ 11 CLOSE\n>END\n");
    auto lines = split_lines(out);
    std::vector<std::string> headers;
    for (const auto& l : lines)
        if (!l.empty() && l[0] == '>' && l != ">END")
            headers.push_back(l);
    REQUIRE(headers.size() == 9);
    CHECK(headers[0] == ">ERR 0 BADFRAME");
    CHECK(headers[1] == ">ERR 0 BADFRAME");
    CHECK(headers[2] == ">ERR 0 BADFRAME");
    CHECK(headers[3] == ">ERR 6 BADTASK");
    CHECK(headers[4] == ">ERR 7 UNBOUND");
    CHECK(headers[5] == ">ERR 8 BADVALUE");
    CHECK(headers[6] == ">ERR 9 IOERR");
    CHECK(headers[7] == ">OK 10");
    CHECK(headers[8] == ">OK 11");
}

TEST_CASE("worker session stops after close even with more input") {
    Rng rng(7);
    WorkerSession session(rng);
    std::string out = serve_session(session, ">REQ 1 CLOSE\n>END\n"
                                             ">REQ 2 INFO\n>END\n");
    auto lines = split_lines(out);
    REQUIRE(lines.size() == 2);
    CHECK(lines[0] == ">OK 1");
}

TEST_CASE("responses preserve request order") {
    Rng rng(8);
    WorkerSession session(rng);
    std::string input;
    for (int i = 1; i <= 20; ++i)
        input += ">REQ " + std::to_string(i) + " INFO\n>END\n";
    auto lines = split_lines(serve_session(session, input));
    int expect = 1;
    for (const auto& l : lines)
        if (l.rfind(">OK ", 0) == 0)
            CHECK(l == ">OK " + std::to_string(expect++));
    CHECK(expect == 21);
}
