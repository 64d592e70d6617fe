import os
import logging
from src.db_config import get_clips, get_models, delete_clip, delete_model

# Configuración de logging para este script
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger('CatalogCleanup')


def _delete_orphans(rows, delete, label: str) -> int:
    orphan_count = 0
    for row in rows:
        file_path = row.get('file_path')
        row_id = row.get('id')

        if not file_path or not row_id:
            continue

        if not os.path.exists(file_path):
            logger.warning(f"FICHERO NO ENCONTRADO: {file_path}. Eliminando {label} ID: {row_id} del catálogo.")
            if delete(row_id):
                logger.info(f"Registro ID {row_id} eliminado con éxito.")
                orphan_count += 1
            else:
                logger.error(f"Fallo al intentar eliminar el registro ID {row_id}.")
    return orphan_count


def find_and_delete_orphan_entries() -> int:
    """
    Busca en el catálogo clips y modelos cuyos ficheros ya no existen en el disco
    y los elimina del catálogo. Devuelve el número de registros eliminados.
    """
    logger.info("Iniciando escaneo del catálogo en busca de huérfanos...")

    clips = get_clips()
    models = get_models()

    if not clips and not models:
        logger.info("El catálogo está vacío. No hay nada que limpiar.")
        return 0

    logger.info(f"Verificando {len(clips)} clips y {len(models)} modelos...")
    orphan_count = _delete_orphans(clips, delete_clip, "clip") + _delete_orphans(models, delete_model, "modelo")

    if orphan_count > 0:
        logger.info(f"Limpieza completada. Se han eliminado {orphan_count} registros huérfanos.")
    else:
        logger.info("Análisis completado. No se encontraron registros huérfanos. ¡El catálogo está limpio!")
    return orphan_count


if __name__ == "__main__":
    find_and_delete_orphan_entries()
