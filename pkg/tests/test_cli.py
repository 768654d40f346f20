"""Command-line behaviour: outputs, exit codes, determinism."""
import pathlib
import subprocess
import sys

import pytest

from parpeval.cli import main

CORPUS = pathlib.Path(__file__).parent / "corpus"
GOLDEN = pathlib.Path(__file__).parent / "golden"

FIB_ENTRY = "fibonacci/2 gr {1}"


def fib_args(*extra):
    return [str(CORPUS / "fib.pl"), "--entry", FIB_ENTRY, *extra]


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)


def test_plain_run_prints_table_and_residual(capsys):
    assert main(fib_args()) == 0
    out = capsys.readouterr().out
    assert "% analysis table" in out
    assert "fibonacci/2 : gr {1} -> {1,2}" in out
    assert "% residual program" in out
    assert "fibonacci_1_1_2(0,1)." in out
    assert "&" in out


def test_out_writes_residual_to_file(tmp_path, capsys):
    out_file = tmp_path / "residual.pl"
    assert main(fib_args("--out", str(out_file))) == 0
    stdout = capsys.readouterr().out
    assert "% analysis table" in stdout
    assert "% residual program" not in stdout
    text = out_file.read_text(encoding="utf-8")
    assert "fibonacci_1_1_2(0,1)." in text
    assert text.endswith(".\n")


def test_trace_matches_golden_transcript(tmp_path, capsys):
    trace_file = tmp_path / "fib.trace"
    assert main(fib_args("--trace", str(trace_file))) == 0
    capsys.readouterr()
    got = trace_file.read_text(encoding="utf-8")
    want = (GOLDEN / "fibonacci.trace").read_text(encoding="utf-8")
    assert got == want


def test_guarded_emission(capsys):
    assert main(fib_args("--emit", "guarded")) == 0
    out = capsys.readouterr().out
    assert "fibonacci_par(0,1)." in out
    assert "concurrent_k(" in out
    assert "max_threads(4)." in out
    assert "&" not in out


def test_guarded_thread_bound_is_adjustable(capsys):
    assert main(fib_args("--emit", "guarded", "--max-threads", "2")) == 0
    assert "max_threads(2)." in capsys.readouterr().out


def test_verify_all_checks_pass(tmp_path, capsys):
    queries = write(
        tmp_path / "q.pl",
        "fibonacci(0, N).\nfibonacci(5, N).\nfibonacci(9, N).\n",
    )
    assert main(fib_args("--verify", "eq,indep,safe", "--queries", queries)) == 0
    out = capsys.readouterr().out
    assert "query fibonacci(0,N) ok" in out
    assert "query fibonacci(5,N) ok (1 answers)" in out
    assert "site <2,1> checked" in out and "violations 0" in out
    assert "row fibonacci/2 {1}" in out


def test_verify_reports_nonconforming_queries(tmp_path, capsys):
    queries = write(tmp_path / "q.pl", "fibonacci(3, N).\nfibonacci(M, N).\n")
    assert main(fib_args("--verify", "eq", "--queries", queries)) == 0
    out = capsys.readouterr().out
    assert "rejected fibonacci(M,N) (position 1 must be ground)" in out


def test_verify_without_matching_queries_fails(tmp_path, capsys):
    queries = write(tmp_path / "q.pl", "other(1).\n")
    assert main(fib_args("--verify", "eq", "--queries", queries)) == 5
    assert "no queries for this entry" in capsys.readouterr().out


# -- exit codes


def test_missing_program_file_is_a_usage_error(tmp_path, capsys):
    assert main([str(tmp_path / "nope.pl"), "--entry", FIB_ENTRY]) == 2
    assert "parpeval:" in capsys.readouterr().err


def test_no_entry_is_a_usage_error(capsys):
    assert main([str(CORPUS / "fib.pl")]) == 2
    assert "no entry point" in capsys.readouterr().err


def test_unknown_check_is_a_usage_error(tmp_path, capsys):
    queries = write(tmp_path / "q.pl", "fibonacci(3, N).\n")
    assert main(fib_args("--verify", "eq,typo", "--queries", queries)) == 2
    assert "unknown check" in capsys.readouterr().err


def test_verify_without_queries_is_a_usage_error(capsys):
    assert main(fib_args("--verify", "eq")) == 2
    assert "--queries" in capsys.readouterr().err


def test_multi_atom_query_line_is_a_usage_error(tmp_path, capsys):
    queries = write(tmp_path / "q.pl", "fibonacci(3, N), fibonacci(4, N).\n")
    assert main(fib_args("--verify", "eq", "--queries", queries)) == 2
    assert "one atom per line" in capsys.readouterr().err


def test_bad_thread_bound_is_a_usage_error(capsys):
    assert main(fib_args("--emit", "guarded", "--max-threads", "0")) == 2
    assert "--max-threads" in capsys.readouterr().err


def test_parse_error_exit_code(tmp_path, capsys):
    bad = write(tmp_path / "bad.pl", "p(X :- q(X).\n")
    assert main([bad, "--entry", "p/1 gr {1}"]) == 3
    assert "parse error" in capsys.readouterr().err


def test_undefined_entry_is_an_analysis_error(capsys):
    assert main([str(CORPUS / "fib.pl"), "--entry", "nosuch/1 gr {1}"]) == 4
    assert "not defined" in capsys.readouterr().err


def test_bad_entry_spec_is_an_analysis_error(capsys):
    assert main([str(CORPUS / "fib.pl"), "--entry", "fibonacci/two"]) == 4


def test_verification_failure_exit_code(tmp_path, capsys):
    # claim p/1 grounds its argument; it provably does not
    prog = write(tmp_path / "p.pl", "p(X) :- r(X, _).\nr(f(Z), Z).\n")
    patterns = write(
        tmp_path / "pat",
        "entry p/1 gr {}\np/1 : gr {} -> {1} ; sh <{1}> -> <{1}>\n",
    )
    queries = write(tmp_path / "q.pl", "p(A).\n")
    code = main(
        [prog, "--patterns", patterns, "--verify", "safe", "--queries", queries]
    )
    assert code == 5
    out = capsys.readouterr().out
    # the wrong row is charged with the violation; honest rows stay clean
    assert "row p/1 {} <{1}> checked 1 violations 1" in out


def test_entry_can_come_from_the_pattern_file(tmp_path, capsys):
    patterns = write(tmp_path / "pat", "entry fibonacci/2 gr {1}\n")
    assert main([str(CORPUS / "fib.pl"), "--patterns", patterns]) == 0
    assert "fibonacci_1_1_2" in capsys.readouterr().out


# -- the emitted text is identical across runs


def run_cli(args, cwd):
    code = (
        "import sys\n"
        "from parpeval.cli import main\n"
        "sys.exit(main(sys.argv[1:]))\n"
    )
    return subprocess.run(
        [sys.executable, "-c", code, *args],
        capture_output=True,
        text=True,
        cwd=cwd,
        check=True,
    )


def test_output_is_deterministic_across_processes(tmp_path):
    texts = []
    for i in (1, 2):
        out = tmp_path / f"res{i}.pl"
        trace = tmp_path / f"t{i}.trace"
        proc = run_cli(
            [
                str(CORPUS / "qsort.pl"),
                "--entry",
                "quicksort/2 gr {1}",
                "--out",
                str(out),
                "--trace",
                str(trace),
            ],
            cwd=tmp_path,
        )
        texts.append((proc.stdout, out.read_bytes(), trace.read_bytes()))
    assert texts[0] == texts[1]
