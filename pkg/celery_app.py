import os
from celery import Celery
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

# Get Redis URL from environment, with a default for local development
redis_url = os.getenv('REDIS_URL', 'redis://localhost:6379/0')

# Broker and result backend share the Redis instance; tasks live in tasks.py
celery = Celery(
    'kv_plate_lab',
    broker=redis_url,
    backend=redis_url,
    include=['tasks']
)

celery.conf.update(
    task_serializer='json',
    accept_content=['json'],
    result_serializer='json',
    enable_utc=True,
    # one sweep point per worker at a time; points differ a lot in cost
    worker_prefetch_multiplier=1,
    # re-queue the point if a worker dies mid-factorization
    task_acks_late=True,
    # CELERY_TASK_ALWAYS_EAGER=true runs tasks inline (tests, single machine)
    task_always_eager=os.getenv('CELERY_TASK_ALWAYS_EAGER', 'false').lower() in ('1', 'true', 'yes'),
    task_eager_propagates=False,
)

if __name__ == '__main__':
    # Command: python celery_app.py worker --loglevel=info
    celery.start()
