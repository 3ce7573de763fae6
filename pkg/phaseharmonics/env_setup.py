import os
import sys
import logging

from dotenv import load_dotenv


def setup_environment():
    """Set up environment variables and logging for the CLI and the HTTP service"""
    load_dotenv()

    level_name = os.environ.get('PH_LOG_LEVEL', 'INFO').upper()
    logging.basicConfig(
        level=getattr(logging, level_name, logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    )
    logger = logging.getLogger('phaseharmonics')

    fft_workers = os.environ.get('PH_FFT_WORKERS')
    if fft_workers:
        logger.info(f"FFT workers set from environment: {fft_workers}")

    logger.debug(f"Python version: {sys.version}")
    logger.debug(f"Working directory: {os.getcwd()}")

    return logger
