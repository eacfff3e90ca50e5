import logging
import os
import time

from lib.helpers.logs import CustomFormatter, LogHelper, LoggingConfigs, LogRotater


def test_rotate_logs_removes_only_stale_log_files(tmp_path, monkeypatch):
    monkeypatch.setenv('SPECLAB_LOGS_DIR', str(tmp_path))
    stale, fresh, other = tmp_path / 'eig-old.log', tmp_path / 'eig-new.log', tmp_path / 'notes.txt'
    for path in (stale, fresh, other):
        path.write_text('x', encoding='utf-8')
    old = time.time() - 10 * 86400
    os.utime(stale, (old, old))
    os.utime(other, (old, old))

    assert LogRotater.rotate_logs(retention_period=7) == 1
    assert not stale.exists()
    assert fresh.exists() and other.exists()


def test_rotate_logs_without_directory(tmp_path, monkeypatch):
    monkeypatch.setenv('SPECLAB_LOGS_DIR', str(tmp_path / 'missing'))
    assert LogRotater.rotate_logs(retention_period=1) == 0


def test_logging_configs_writes_dated_file_under_logs_dir(tmp_path, monkeypatch):
    monkeypatch.setenv('SPECLAB_LOGS_DIR', str(tmp_path / 'logs'))
    config = LoggingConfigs.logging_configs('eig', console_level=logging.WARNING)
    assert (tmp_path / 'logs').is_dir()
    assert config['handlers']['file']['filename'].startswith(str(tmp_path / 'logs' / 'eig-'))
    assert config['handlers']['console']['level'] == logging.WARNING


def test_formatter_styles_and_capitalises():
    record = logging.LogRecord('speclab', logging.WARNING, __file__, 1, 'gram matrix is singular', None, None)
    assert CustomFormatter().format(record) == '[orange3 bold]Gram matrix is singular'
    error = logging.LogRecord('speclab', logging.ERROR, __file__, 1, ValueError('bad'), None, None)
    assert CustomFormatter().format(error) == '[red3 bold]bad'


def test_split_message_logs_each_line(caplog):
    with caplog.at_level(logging.INFO):
        LogHelper.split_message('a | b\n\n1 | 2\n')
    assert [r.getMessage() for r in caplog.records] == ['a | b', '1 | 2']
