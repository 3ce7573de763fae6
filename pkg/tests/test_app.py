import os
import time

import numpy as np
import pytest

import app as app_module


@pytest.fixture
def client(tmp_path, monkeypatch):
    monkeypatch.setattr(app_module, 'results_dir', str(tmp_path))
    app_module.app.config['TESTING'] = True
    with app_module.app.test_client() as client:
        yield client


def _piecewise(n=64):
    t = np.arange(n) / n
    return np.where(t < 0.5, np.sin(2 * np.pi * t), 0.25).tolist()


def test_index_lists_endpoints(client):
    response = client.get('/')
    assert response.status_code == 200
    assert 'POST /describe' in response.get_json()['endpoints']


def test_hhat(client):
    data = client.get('/hhat?kind=rectifier&kmax=4').get_json()
    assert data['success']
    assert len(data['hhat']) == 9
    assert client.get('/hhat?kind=bogus').status_code == 400


def test_filterbank_check(client):
    data = client.get('/filterbank-check?d=1&n=64').get_json()
    assert data['channels'] == 7
    assert 0 < data['eta'] < 1
    assert data['eta_full'] == data['eta']
    assert data['eta_band'] <= data['eta_full']

    narrow = client.get('/filterbank-check?d=1&n=64&max_freq=0.5').get_json()
    assert narrow['max_freq'] == 0.5
    assert client.get('/filterbank-check?d=1&n=64&max_freq=-1').status_code == 400


def test_describe(client):
    response = client.post('/describe', json={'signal': _piecewise(), 'delta': 2, 'k2_max': 4})
    assert response.status_code == 200
    data = response.get_json()
    assert data['counts']['total'] == len(data['descriptors']['means']) + len(data['descriptors']['correlations'])


@pytest.mark.parametrize('body', [{}, {'signal': list(range(60))}, {'signal': [0.0] * 64, 'delta': 99}])
def test_describe_rejects_bad_input(client, body):
    response = client.post('/describe', json=body)
    assert response.status_code == 400
    assert response.get_json()['success'] is False


def test_reconstruction_job(client):
    desc = client.post('/describe', json={'signal': _piecewise(), 'delta': 1, 'k2_max': 2}).get_json()['descriptors']
    response = client.post('/reconstruct', json={'descriptors': desc, 'restarts': 1, 'max_iters': 5,
                                                 'reference': _piecewise()})
    assert response.status_code == 202
    job_id = response.get_json()['job_id']

    deadline = time.time() + 60
    data = client.get(f'/jobs/{job_id}').get_json()
    while data.get('status') == 'processing' and time.time() < deadline:
        time.sleep(0.1)
        data = client.get(f'/jobs/{job_id}').get_json()

    assert data['status'] == 'complete'
    assert len(data['signal']) == 64
    assert data['report']['M'] == desc['counts']['total']
    assert data['report']['psnr'] is not None


def test_job_lookup_errors(client):
    assert client.get('/jobs/not-a-job').status_code == 400
    assert client.get('/jobs/' + 'a' * 32).status_code == 404
    assert client.post('/reconstruct', json={}).status_code == 400


def test_cleanup_old_results(tmp_path):
    old = tmp_path / 'phaseharmonics_old.json'
    fresh = tmp_path / 'phaseharmonics_new.json'
    other = tmp_path / 'other.json'
    for path in (old, fresh, other):
        path.write_text('{}')
    past = time.time() - 7200
    os.utime(old, (past, past))
    os.utime(other, (past, past))

    assert app_module.cleanup_old_results(str(tmp_path), max_age_seconds=3600) == 1
    assert not old.exists()
    assert fresh.exists() and other.exists()
