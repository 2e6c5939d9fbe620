from .imports import load_dotenv, os


load_dotenv()
OUTPUT_DIR = os.getenv("lab_output_dir") or "runs"
LOG_PATH = os.getenv("lab_log_path") or "lab_logs.txt"
SILENT = (os.getenv("lab_silent") or "").strip().lower() in {"1", "true", "yes"}
