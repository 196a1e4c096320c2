import asyncio
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from quasilocal.tools import formats, utils
from quasilocal.tools.constants import CASE_TEMPLATE_SUFFIX, LOG_DIR, LOGGER_MAIN, TEST_CASES_DIR
from quasilocal.tools.errors import InputError, QuasiLocalError


@dataclass
class CaseResult:
    name: str
    passed: bool = True
    lines: list[str] = field(default_factory=list)


class CaseRunner:
    """Runs acceptance case files: a list of CLI steps followed by checks on the emitted reports.

    A case file looks like::

        {
            "subdivisions": 4,
            "steps": [["oracle", "schwarzschild", "--m", "1", "--R", "10"],
                      ["energy", "--data", "{out}/schwarzschild.json"]],
            "checks": [{"report": "energy_report.json", "key": "m_by", "expected": 1.05573, "rtol": 5e-3}]
        }

    Every case writes into its own directory under the log directory and logs into its own file.
    """

    def __init__(self, debug: bool = False, workers: int = 1, log_dir: str = LOG_DIR):
        self.debug = debug
        self.workers = workers
        self.log_dir = log_dir
        self.logger = logging.getLogger(LOGGER_MAIN)
        self.case_loggers: dict[str, logging.Logger] = {}
        self.case_definitions: dict[str, dict] = {}

    async def run_cases(self, cases_dir: str | os.PathLike = TEST_CASES_DIR) -> dict[str, CaseResult]:
        cases_dir = Path(os.path.dirname(__file__)) / cases_dir
        if not cases_dir.is_dir():
            raise InputError(f"case directory {cases_dir} does not exist")
        case_files = sorted(f for f in cases_dir.iterdir()
                            if f.is_file() and f.suffix == '.json' and not f.name.endswith(CASE_TEMPLATE_SUFFIX))

        for case_file in case_files:
            name = case_file.stem
            self.case_loggers[name] = utils.case_logger(name, debug=self.debug, log_dir=self.log_dir)
            self.case_definitions[name] = formats.read_json(case_file)
            self.logger.info(f"--- Case: {name} submitted for execution ---")

        semaphore = asyncio.Semaphore(self.workers)

        async def bounded(name: str) -> CaseResult:
            async with semaphore:
                return await asyncio.to_thread(self.run_case, name)

        results = await asyncio.gather(*(bounded(f.stem) for f in case_files))

        for result in results:
            self.logger.info(f"--- Result for case: {result.name} ---")
            for line in result.lines:
                self.logger.info(line)
            self.logger.info(f"--- Case: {result.name} {'passed' if result.passed else 'FAILED'} ---")
        return {result.name: result for result in results}

    def run_case(self, name: str) -> CaseResult:
        from quasilocal.cli import build_config, build_parser, execute

        logger = self.case_loggers[name]
        case = self.case_definitions[name]
        out = Path(self.log_dir) / 'cases' / name
        result = CaseResult(name)
        logger.info(f"--- Case: {name} starting ---")
        logger.debug(f"Case definition: {case}")

        parser = build_parser()
        try:
            for step in case.get('steps', []):
                argv = ['-o', str(out), '-s', str(case.get('subdivisions', 3))]
                argv += [token.replace('{out}', str(out)) for token in step]
                logger.info(f"step: {' '.join(step)}")
                summary = execute(build_config(parser.parse_args(argv)))
                logger.info(f"summary: {summary}")
        except QuasiLocalError as exc:
            expected = case.get('expect_error')
            result.passed = expected == type(exc).__name__
            result.lines.append(f"{type(exc).__name__}: {exc}")
            logger.log(logging.INFO if result.passed else logging.ERROR, result.lines[-1])
            return result
        if 'expect_error' in case:
            result.passed = False
            result.lines.append(f"expected {case['expect_error']} but every step succeeded")

        for check in case.get('checks', []):
            report = formats.read_json(out / check['report'])
            value = report
            for part in check['key'].split('.'):
                value = value[part]
            ok = bool(np.isclose(value, check['expected'], rtol=check.get('rtol', 1e-6), atol=check.get('atol', 0.0)))
            result.passed &= ok
            result.lines.append(f"{check['report']}:{check['key']} = {value!r}, expected {check['expected']!r}"
                                f" -> {'ok' if ok else 'MISMATCH'}")
            logger.info(result.lines[-1])
        logger.info(f"--- Case: {name} completed ---")
        return result
