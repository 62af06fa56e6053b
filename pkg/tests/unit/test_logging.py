"""
Tests for logging configuration and the training log
"""

import logging

import pytest

from src.utils.logging_config import (
    TRAINING_FIELDS,
    PerformanceLogger,
    attach_training_log,
    get_logger,
    log_training_event,
    setup_logging,
)


@pytest.fixture
def training_logger():
    """Isolated child logger with no handlers"""
    logger = get_logger("tests.training")
    yield logger
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()


def test_child_logger_names():
    assert get_logger("services.corpus").name == "signflow.services.corpus"


def test_setup_logging_writes_files(tmp_path):
    logger = setup_logging("signflow_test", log_level="DEBUG", log_dir=tmp_path, enable_console=False)
    logger.info("hello")
    logger.error("boom")
    for handler in logger.handlers:
        handler.flush()
    assert "hello" in (tmp_path / "signflow_test.log").read_text()
    assert "boom" in (tmp_path / "signflow_test_error.log").read_text()
    assert "hello" not in (tmp_path / "signflow_test_error.log").read_text()
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()


class TestTrainingLog:
    def test_header_and_rows(self, training_logger, tmp_path):
        path = tmp_path / "logs" / "train.tsv"
        handler = attach_training_log(training_logger, path)
        log_training_event(training_logger, "Epoch complete", epoch=0, l_d=0.5, l_ecl=0.0, l_nce=1.25, total=1.75, wall_time=0.1)
        training_logger.info("not a training record")
        handler.close()

        lines = path.read_text().splitlines()
        assert lines[0] == "\t".join(TRAINING_FIELDS)
        assert lines[1].split("\t") == ["0", "0.5", "0", "1.25", "1.75", "0.1"]
        assert len(lines) == 2

    def test_appends_without_second_header(self, training_logger, tmp_path):
        path = tmp_path / "train.tsv"
        for epoch in range(2):
            handler = attach_training_log(training_logger, path)
            log_training_event(training_logger, "Epoch", epoch=epoch, l_d=1.0, l_ecl=0.0, l_nce=0.0, total=1.0, wall_time=0.0)
            training_logger.removeHandler(handler)
            handler.close()
        lines = path.read_text().splitlines()
        assert len(lines) == 3
        assert [line.split("\t")[0] for line in lines[1:]] == ["0", "1"]

    def test_message_carries_fields(self, training_logger, caplog):
        with caplog.at_level(logging.INFO, logger="signflow"):
            log_training_event(training_logger, "Epoch complete", epoch=4, total=2.5)
        assert "Epoch complete | epoch=4, total=2.5000" in caplog.text

    def test_training_run_writes_one_line_per_epoch(self, pipeline, corpus, tmp_path):
        path = tmp_path / "train.tsv"
        reports = pipeline.fit(corpus, epochs=2, log_path=path)
        lines = path.read_text().splitlines()
        assert len(lines) == 3
        rows = [line.split("\t") for line in lines[1:]]
        assert [row[0] for row in rows] == ["0", "1"]
        assert all(len(row) == len(TRAINING_FIELDS) for row in rows)
        assert float(rows[1][4]) == pytest.approx(reports[1].total, rel=1e-5)


class TestPerformanceLogger:
    def test_slow_operation_warns(self, caplog):
        logger = get_logger("tests.perf")
        with caplog.at_level(logging.DEBUG, logger="signflow"), PerformanceLogger(logger, "sleepy", threshold_ms=-1):
            pass
        assert "sleepy took" in caplog.text

    def test_fast_operation_logs_debug(self, caplog):
        logger = get_logger("tests.perf")
        with caplog.at_level(logging.DEBUG, logger="signflow"), PerformanceLogger(logger, "quick", threshold_ms=1e9) as perf:
            pass
        assert "quick completed" in caplog.text
        assert perf.duration_ms >= 0
