import os
import re
import json
import time
import uuid
import tempfile
import threading

from werkzeug.exceptions import HTTPException
from werkzeug.middleware.proxy_fix import ProxyFix

# Setup environment first before any other imports
from phaseharmonics.env_setup import setup_environment
logger = setup_environment()

import numpy as np
from flask import Flask, request, jsonify

from phaseharmonics.descriptors import count_breakdown, describe as compute_descriptors, select_coefficients
from phaseharmonics.filterbank import bank_from_params, build_bank, frame_check
from phaseharmonics.json_utils import descriptor_set_from_json, descriptor_set_to_json, recovery_report, to_jsonable
from phaseharmonics.phase_harmonics import hhat_table, lipschitz_constants
from phaseharmonics.recovery import RecoveryConfig, reconstruct, ergodicity_report
from phaseharmonics.settings import load_settings
from phaseharmonics.signal_io import RngSpec, check_signal

app = Flask(__name__)

# Apply ProxyFix for correct proxy handling behind a reverse proxy
app.wsgi_app = ProxyFix(app.wsgi_app, x_for=1, x_proto=1, x_host=1, x_port=1, x_prefix=1)

settings = load_settings()
results_dir = os.environ.get('PH_RESULTS_DIR') or tempfile.gettempdir()
result_ttl = int(os.environ.get('PH_RESULT_TTL_SECONDS', '3600'))
os.makedirs(results_dir, exist_ok=True)

JOB_ID_PATTERN = re.compile(r'^[a-f0-9]{32}$')

# In-flight jobs; finished results live on disk
processing_results = {}


def cleanup_old_results(directory, max_age_seconds=3600):
    """
    Delete job result files older than max_age_seconds from the results directory.
    """
    now = time.time()
    deleted = 0
    for name in os.listdir(directory):
        if not (name.startswith('phaseharmonics_') and name.endswith('.json')):
            continue
        path = os.path.join(directory, name)
        try:
            if os.path.isfile(path) and now - os.path.getmtime(path) > max_age_seconds:
                os.remove(path)
                deleted += 1
        except OSError as e:
            logger.warning(f"Could not delete result file {path}: {e}")
    if deleted > 0:
        logger.info(f"Deleted {deleted} expired result files from {directory}")
    return deleted


cleanup_old_results(results_dir, max_age_seconds=result_ttl)


def _result_path(job_id):
    """Path of a job result file, or None for an invalid id"""
    if not JOB_ID_PATTERN.match(job_id or ''):
        logger.error("Invalid job_id format: rejected for security")
        return None
    path = os.path.realpath(os.path.join(results_dir, f"phaseharmonics_{job_id}.json"))
    if not path.startswith(os.path.realpath(results_dir) + os.sep):
        logger.error("Path traversal attempt detected")
        return None
    return path


def save_job_result(job_id, data):
    path = _result_path(job_id)
    if path is None:
        return False
    try:
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(data, f)
        return True
    except OSError as e:
        logger.error(f"Error saving job result: {str(e)}")
        return False


def load_job_result(job_id):
    path = _result_path(job_id)
    if path is None or not os.path.exists(path):
        return None
    try:
        with open(path, 'r', encoding='utf-8') as f:
            return json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        logger.error(f"Error loading job result: {str(e)}")
        return None


def error_response(message, status):
    return jsonify({'success': False, 'error': message}), status


def _int_arg(source, key, default):
    value = source.get(key)
    return default if value is None or value == '' else int(value)


def _float_arg(source, key, default):
    value = source.get(key)
    return default if value is None or value == '' else float(value)


def _signal_from_body(values, shape):
    data = np.asarray(values, dtype=np.float64)
    if shape is not None:
        data = data.reshape([int(n) for n in shape])
    return check_signal(data)


@app.errorhandler(ValueError)
def handle_value_error(e):
    logger.warning(f"Rejected request to {request.path}: {e}")
    return error_response(str(e), 400)


@app.errorhandler(Exception)
def handle_exception(e):
    if isinstance(e, HTTPException):
        return error_response(e.description, e.code)
    logger.error(f"Unhandled error on {request.path}: {str(e)}", exc_info=True)
    return error_response('Internal error while processing the request', 500)


@app.route('/')
def index():
    return jsonify({
        'service': 'phaseharmonics',
        'endpoints': {
            'GET /hhat': 'Fourier table of a phase filter (kind, kmax)',
            'GET /filterbank-check': 'Frame bounds of a bump bank (d, n, j, q, l)',
            'POST /describe': 'Phase-harmonic descriptors of a signal',
            'POST /reconstruct': 'Start a reconstruction job from descriptors',
            'GET /jobs/<job_id>': 'Status and result of a reconstruction job',
        },
    })


@app.route('/hhat')
def hhat():
    kind = request.args.get('kind', 'rectifier')
    h = hhat_table(kind, _int_arg(request.args, 'kmax', settings['kmax']))
    return jsonify({'success': True, **h.to_dict(), 'constants': lipschitz_constants(h)})


@app.route('/filterbank-check')
def filterbank_check():
    args = request.args
    bank = build_bank(_int_arg(args, 'd', settings['d']), _int_arg(args, 'n', settings['n']),
                      _int_arg(args, 'j', settings['j']), _int_arg(args, 'q', settings['q']),
                      _int_arg(args, 'l', settings['l']))
    max_freq = _float_arg(args, 'max_freq', None)
    return jsonify({'success': True, **frame_check(bank, max_freq)})


@app.route('/describe', methods=['POST'])
def describe():
    body = request.get_json(silent=True)
    if not isinstance(body, dict) or 'signal' not in body:
        return error_response("JSON body with a 'signal' array is required", 400)

    x = _signal_from_body(body['signal'], body.get('shape'))
    if x.ndim == 2 and x.shape[0] != x.shape[1]:
        raise ValueError(f"2D signals must be square, got {x.shape}")
    bank = build_bank(x.ndim, x.shape[0], _int_arg(body, 'j', settings['j']),
                      _int_arg(body, 'q', settings['q']), _int_arg(body, 'l', settings['l']))
    selection = select_coefficients(bank, _int_arg(body, 'delta', settings['delta']),
                                    _float_arg(body, 'beta', settings['beta']),
                                    _int_arg(body, 'k2_max', settings['k2_max']),
                                    bool(body.get('include_lowpass', settings['include_lowpass'])),
                                    bool(body.get('cross_angles', settings['cross_angles'])))
    desc = compute_descriptors(x, bank, selection)
    return jsonify({'success': True, 'counts': count_breakdown(selection),
                    'descriptors': descriptor_set_to_json(desc)})


def run_reconstruction(job_id, desc, cfg, reference):
    """Background worker: run the reconstruction and store the result file"""
    def progress(done, total):
        if job_id in processing_results:
            processing_results[job_id]['progress'] = {'restarts_done': done, 'restarts_total': total}

    try:
        bank = bank_from_params(desc.bank_params)
        result = reconstruct(desc, bank, cfg, reference=reference, progress=progress)
        data = {
            'status': 'complete',
            'report': recovery_report(result, ergodicity_report(result)),
            'shape': list(result.signal.shape),
            'signal': to_jsonable(result.signal.ravel()),
        }
        if save_job_result(job_id, data):
            processing_results[job_id]['status'] = 'complete'
        else:
            processing_results[job_id]['status'] = 'error'
            processing_results[job_id]['error'] = 'Failed to save job result'
    except Exception as e:
        logger.error(f"Reconstruction job {job_id} failed: {str(e)}", exc_info=True)
        processing_results[job_id]['status'] = 'error'
        processing_results[job_id]['error'] = str(e)


@app.route('/reconstruct', methods=['POST'])
def start_reconstruction():
    body = request.get_json(silent=True)
    if not isinstance(body, dict) or 'descriptors' not in body:
        return error_response("JSON body with 'descriptors' is required", 400)

    desc = descriptor_set_from_json(body['descriptors'])
    cfg = RecoveryConfig(
        restarts=_int_arg(body, 'restarts', settings['restarts']),
        max_iters=_int_arg(body, 'max_iters', settings['max_iters']),
        memory=settings['memory'], c1=settings['c1'], c2=settings['c2'], grad_tol=settings['grad_tol'],
        rng=RngSpec(_int_arg(body, 'seed', settings['seed']), settings['stream']),
        init_scale=settings['init_scale'], workers=settings['restart_workers'],
    )
    reference = None
    if body.get('reference') is not None:
        reference = _signal_from_body(body['reference'], desc.shape)

    cleanup_old_results(results_dir, max_age_seconds=result_ttl)
    job_id = uuid.uuid4().hex
    processing_results[job_id] = {'status': 'processing', 'started': time.time(),
                                  'progress': {'restarts_done': 0, 'restarts_total': cfg.restarts}}
    thread = threading.Thread(target=run_reconstruction, args=(job_id, desc, cfg, reference))
    thread.daemon = True
    thread.start()
    logger.info(f"Started reconstruction job {job_id} with M={desc.M}")
    return jsonify({'success': True, 'job_id': job_id}), 202


@app.route('/jobs/<job_id>')
def job_status(job_id):
    if not JOB_ID_PATTERN.match(job_id):
        return error_response('Invalid job id', 400)

    job = processing_results.get(job_id)
    if job is not None and job['status'] == 'processing':
        return jsonify({'success': True, 'status': 'processing', 'progress': job['progress']})
    if job is not None and job['status'] == 'error':
        return jsonify({'success': False, 'status': 'error', 'error': job.get('error', 'Unknown error')})

    data = load_job_result(job_id)
    if data is None:
        return error_response('Job not found or expired', 404)
    return jsonify({'success': True, **data})


if __name__ == '__main__':
    port = int(os.environ.get("PORT", 8080))
    debug = os.environ.get('FLASK_DEBUG', '').lower() in ('1', 'true')
    logger.info(f"Starting Flask app on port {port}")
    app.run(host='0.0.0.0', port=port, debug=debug)
