from .env import LOG_PATH, SILENT


LOGS = {
	"path": LOG_PATH,
	"content": ""
}
VERBOSITY = {
	"silent": SILENT
}
