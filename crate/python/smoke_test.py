"""Exercise the Python bindings end to end on a small budget."""

import os
import tempfile

import rulefuzz_py as rf


def main():
    seeds = rf.collect_seeds(per_op=4, seed=1)
    assert seeds and any(r.valid for r in seeds)
    line = seeds[-1].to_line()
    assert rf.Record.from_line(line).to_line() == line
    names, values = seeds[0].env()
    assert len(names) == len(values)

    records = rf.augment(seeds, target=20, seconds=1.0, seed=0)
    assert any(not r.valid for r in records)

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "records.jsonl")
        rf.write_records(path, records)
        assert len(rf.read_records(path)) == len(records)

        templates = rf.Templates(max_ops=2)
        assert len(templates) > 0
        adds = [r for r in records if r.api == "add"]
        outcomes = rf.infer_rules(adds, templates, timeout=2.0)
        rules = [o.rule for o in outcomes if o.rule is not None]
        assert rules, [o.error for o in outcomes]
        rule = rules[0]
        env = adds[0].env()[1]
        assert rule.accepts(env)
        assert rule.propagate(env) is not None

        book = os.path.join(d, "rules.book")
        rf.write_rulebook(book, rules)
        assert [r.to_line() for r in rf.read_rulebook(book)] == [r.to_line() for r in rules]

        manual = rf.manual_rules(seeds)
        assert manual and all(r.provenance == "manual" for r in manual)

        graph = rf.generate(seeds, manual=manual, nodes=4, seed=3)
        assert len(graph) > 0
        assert rf.Graph.parse(graph.to_text()).to_text() == graph.to_text()

        clean = rf.fuzz(seeds, manual=manual, tests=200, seed=1)
        assert clean.tests == 200 and clean.reports == 0, str(clean)
        assert clean.validity_rate > 0.9

        plan = os.path.join(os.path.dirname(__file__), "..", "crates", "core", "data", "seeded_bugs.json")
        buggy = rf.fuzz(seeds, manual=manual, tests=300, seed=1, bug_plan=plan, out_dir=os.path.join(d, "runs"))
        assert buggy.reports > 0 and buggy.findings, str(buggy)
        assert all(path and os.path.isdir(path) for _, _, _, _, path in buggy.findings)

    print("smoke test passed: %d seeds, %d rules, %d findings" % (len(seeds), len(rules), len(buggy.findings)))


if __name__ == "__main__":
    main()
