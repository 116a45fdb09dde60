import logging
import os

import pytest

from rfadvq import log

ENV_NAME = 'RFADVQ_TESTING_LEVEL'


@pytest.fixture(autouse=True)
def restore():
    level = log.logger.level
    yield
    os.environ.pop(ENV_NAME, None)
    log.logger.setLevel(level)


def test_key_does_not_exist():
    assert ENV_NAME not in os.environ
    assert log.env_level(ENV_NAME) == logging.DEBUG


def test_raises():
    os.environ[ENV_NAME] = 'invalid'
    with pytest.raises(ValueError, match=r'Invalid log level \'INVALID\''):
        log.env_level(ENV_NAME)


@pytest.mark.parametrize(
    ('value', 'expect'),
    [('10', logging.DEBUG),
     ('debug', logging.DEBUG),
     ('INFO', logging.INFO),
     ('20', logging.INFO),
     ('WARN', logging.WARNING),
     ('warning', logging.WARNING),
     ('error', logging.ERROR),
     ('FATAL', logging.CRITICAL),
     ('50', logging.CRITICAL)])
def test_env_level(value, expect):
    os.environ[ENV_NAME] = value
    assert log.env_level(ENV_NAME) == expect


def test_parse_level():
    assert log.parse_level(25) == 25
    assert log.parse_level('info') == logging.INFO
    with pytest.raises(ValueError, match=r'Invalid log level'):
        log.parse_level('chatty')


def test_configure(monkeypatch):
    log.configure('warning')
    assert log.logger.level == logging.WARNING
    monkeypatch.setenv('RFADVQ_LOG_LEVEL', 'error')
    log.configure()
    assert log.logger.level == logging.ERROR
    monkeypatch.delenv('RFADVQ_LOG_LEVEL')
    log.configure()
    assert log.logger.level == logging.DEBUG


def test_package_logger():
    assert log.logger.name == 'rfadvq'
    log.set_errors('rfadvq.testing')
    assert logging.getLogger('rfadvq.testing').level == logging.ERROR
    log.set_block('rfadvq.testing')
    assert logging.getLogger('rfadvq.testing').level == logging.CRITICAL + 1


@pytest.mark.parametrize(
    ('function', 'expect'),
    [(log.set_debug, logging.DEBUG),
     (log.set_info, logging.INFO),
     (log.set_warnings, logging.WARNING)])
def test_set_helpers(function, expect):
    function('rfadvq.helpers.a', 'rfadvq.helpers.b')
    assert logging.getLogger('rfadvq.helpers.a').level == expect
    assert logging.getLogger('rfadvq.helpers.b').level == expect
